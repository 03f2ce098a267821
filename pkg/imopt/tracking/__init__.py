"""Problem families, online algorithms and tracking analysis"""
