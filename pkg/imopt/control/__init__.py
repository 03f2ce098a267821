"""Internal models, the LMI solver and controller synthesis"""
