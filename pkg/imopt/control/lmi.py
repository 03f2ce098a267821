# lmi.py

"""
Small dense LMI feasibility solver.

A system is a list of affine symmetric-matrix constraints

    base + sum_terms (L X R + (L X R)^T)  >  0

over matrix decision variables X. Feasibility is decided by maximizing the
margin t subject to every constraint being >= t*I, with a log-det barrier
interior-point iteration. Decision variables are kept inside a Euclidean ball
of radius `radius` (in the scalar parametrization) so the barrier problem is
bounded. solve_feasibility retries on a growing sequence of balls, so an
Infeasible verdict means no strictly feasible point exists inside the largest
one.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg as sla

from imopt.errors import ConfigurationError, Infeasible, LmiNoConvergence
from imopt.logger import logger

DEFAULT_TOL = 1e-7
DEFAULT_MAX_NEWTON = 200
DEFAULT_RADIUS = 1e6
# badly scaled certificates (many poles near z = 1) only appear on the larger balls
RADIUS_SCHEDULE = (1e6, 1e8, 1e10)


@dataclass(frozen=True)
class Variable:
    name: str
    shape: Tuple[int, int]
    symmetric: bool = False

    def basis(self) -> List[np.ndarray]:
        rows, cols = self.shape
        elements = []
        if self.symmetric:
            for a in range(rows):
                for b in range(a, rows):
                    e = np.zeros((rows, cols))
                    e[a, b] = 1.0
                    e[b, a] = 1.0
                    elements.append(e)
        else:
            for a in range(rows):
                for b in range(cols):
                    e = np.zeros((rows, cols))
                    e[a, b] = 1.0
                    elements.append(e)
        return elements


@dataclass
class Term:
    """Contributes L X R + (L X R)^T to its constraint"""
    var: str
    left: np.ndarray
    right: np.ndarray


@dataclass
class Constraint:
    base: np.ndarray
    terms: List[Term] = field(default_factory=list)
    name: str = ""

    @property
    def size(self) -> int:
        return self.base.shape[0]


@dataclass
class LmiSolution:
    assignments: Dict[str, np.ndarray]
    margin: float


class LmiSystem:
    """Registry of matrix variables plus the affine constraints over them"""

    def __init__(self):
        self.variables: Dict[str, Variable] = {}
        self.constraints: List[Constraint] = []

    def variable(self, name: str, shape: Tuple[int, int], symmetric: bool = False) -> str:
        if name in self.variables:
            raise ConfigurationError(f"LMI variable '{name}' declared twice")
        rows, cols = shape
        if rows < 1 or cols < 1:
            raise ConfigurationError(f"LMI variable '{name}' has empty shape {shape}")
        if symmetric and rows != cols:
            raise ConfigurationError(f"symmetric LMI variable '{name}' must be square, got {shape}")
        self.variables[name] = Variable(name, (rows, cols), symmetric)
        return name

    def constraint(self, base, terms: Sequence[Tuple[str, object, object]] = (), name: str = "") -> Constraint:
        """
        Add `base + sum sym(L X R) > 0`.

        Args:
            base: square symmetric matrix (a scalar is read as 1x1)
            terms: (variable name, L, R) triples
            name: label used in diagnostics
        """
        base = np.atleast_2d(np.asarray(base, dtype=float))
        built = [Term(var, np.atleast_2d(np.asarray(L, dtype=float)), np.atleast_2d(np.asarray(R, dtype=float)))
                 for var, L, R in terms]
        c = Constraint(base=base, terms=built, name=name or f"c{len(self.constraints)}")
        self._check(c)
        self.constraints.append(c)
        return c

    def _check(self, c: Constraint) -> None:
        d = c.base.shape[0]
        if c.base.ndim != 2 or c.base.shape != (d, d):
            raise ConfigurationError(f"constraint {c.name}: base must be square, got {c.base.shape}")
        if not np.allclose(c.base, c.base.T, atol=1e-12 * max(1.0, np.abs(c.base).max(initial=0.0))):
            raise ConfigurationError(f"constraint {c.name}: base is not symmetric")
        for term in c.terms:
            var = self.variables.get(term.var)
            if var is None:
                raise ConfigurationError(f"constraint {c.name}: unknown variable '{term.var}'")
            rows, cols = var.shape
            if term.left.shape != (d, rows) or term.right.shape != (cols, d):
                raise ConfigurationError(
                    f"constraint {c.name}: term on '{term.var}' has L {term.left.shape}, R {term.right.shape}; "
                    f"expected ({d}, {rows}) and ({cols}, {d})"
                )

    @property
    def dimension(self) -> int:
        return sum(len(v.basis()) for v in self.variables.values())

    def unpack(self, y: np.ndarray) -> Dict[str, np.ndarray]:
        assignments = {}
        offset = 0
        for var in self.variables.values():
            value = np.zeros(var.shape)
            for e in var.basis():
                value += y[offset] * e
                offset += 1
            assignments[var.name] = value
        return assignments

    def assemble(self, assignments: Dict[str, np.ndarray]) -> List[np.ndarray]:
        """Constraint matrices evaluated at the given variable values"""
        matrices = []
        for c in self.constraints:
            total = c.base.copy()
            for term in c.terms:
                lxr = term.left @ np.asarray(assignments[term.var], dtype=float) @ term.right
                total += lxr + lxr.T
            matrices.append(total)
        return matrices

    def coefficients(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Per constraint: (base, stacked coefficient matrices, one per scalar decision variable)"""
        out = []
        for c in self.constraints:
            d = c.size
            blocks = []
            for var in self.variables.values():
                terms = [t for t in c.terms if t.var == var.name]
                for e in var.basis():
                    acc = np.zeros((d, d))
                    for t in terms:
                        lxr = t.left @ e @ t.right
                        acc += lxr + lxr.T
                    blocks.append(acc)
            stacked = np.array(blocks).reshape(len(blocks), d, d)
            out.append((c.base, stacked))
        return out


def min_eigenvalue(matrices: Sequence[np.ndarray]) -> float:
    return min(float(sla.eigvalsh(0.5 * (M + M.T))[0]) for M in matrices)


class InteriorPointSolver:
    """
    Barrier method for  max t  s.t.  F_j(y) - t I > 0,  ||y|| < radius.

    One solve per instance at a time; the iteration state lives on the instance.
    """

    def __init__(self, tol: float = DEFAULT_TOL, max_newton: int = DEFAULT_MAX_NEWTON,
                 radius: float = DEFAULT_RADIUS, barrier_growth: float = 10.0, centering_tol: float = 1e-9):
        if not tol > 0:
            raise ConfigurationError(f"LMI tolerance must be positive, got {tol}")
        self.tol = tol
        self.max_newton = max_newton
        self.radius = radius
        self.barrier_growth = barrier_growth
        self.centering_tol = centering_tol
        self.newton_steps = 0

    def _slacks(self, y: np.ndarray, t: float) -> List[np.ndarray]:
        slacks = []
        for base, coeffs in self._coeffs:
            S = base + np.tensordot(y, coeffs, axes=1) if coeffs.shape[0] else base.copy()
            slacks.append(S - t * np.eye(base.shape[0]))
        return slacks

    def _objective(self, y: np.ndarray, t: float, s: float) -> Optional[float]:
        """Barrier objective, None outside the domain"""
        room = self.radius ** 2 - float(y @ y)
        if room <= 0:
            return None
        value = -s * t - np.log(room)
        for S in self._slacks(y, t):
            try:
                chol = sla.cholesky(S, lower=True)
            except sla.LinAlgError:
                return None
            value -= 2.0 * np.sum(np.log(np.diag(chol)))
        return value

    def _newton_system(self, y: np.ndarray, t: float, s: float) -> Tuple[np.ndarray, np.ndarray]:
        p = y.size
        grad = np.zeros(p + 1)
        hess = np.zeros((p + 1, p + 1))
        grad[p] = -s
        for (base, coeffs), S in zip(self._coeffs, self._slacks(y, t)):
            d = base.shape[0]
            full = np.concatenate([coeffs, -np.eye(d)[None, :, :]], axis=0)
            factor = sla.cho_factor(S, lower=True)
            W = np.array([sla.cho_solve(factor, A) for A in full])
            grad -= np.trace(W, axis1=1, axis2=2)
            hess += np.einsum("aij,bji->ab", W, W)
        room = self.radius ** 2 - float(y @ y)
        grad[:p] += 2.0 * y / room
        hess[:p, :p] += 2.0 * np.eye(p) / room + 4.0 * np.outer(y, y) / room ** 2
        return grad, hess

    def _newton_direction(self, grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
        try:
            return -sla.cho_solve(sla.cho_factor(hess), grad)
        except (sla.LinAlgError, ValueError):
            return -np.linalg.lstsq(hess, grad, rcond=None)[0]

    def solve(self, system: LmiSystem) -> Union[LmiSolution, Infeasible]:
        if not system.constraints:
            raise ConfigurationError("LMI system has no constraints")
        self._coeffs = system.coefficients()
        p = system.dimension
        nu = sum(base.shape[0] for base, _ in self._coeffs) + 1

        y = np.zeros(p)
        t = min_eigenvalue([base for base, _ in self._coeffs]) - 1.0
        s = 1.0
        self.newton_steps = 0

        while True:
            while True:
                if t >= self.tol:
                    margin = min_eigenvalue(system.assemble(system.unpack(y)))
                    if margin >= self.tol:
                        logger.debug(f"LMI - feasible after {self.newton_steps} Newton steps, margin {margin:.3e}")
                        return LmiSolution(assignments=system.unpack(y), margin=margin)

                grad, hess = self._newton_system(y, t, s)
                step = self._newton_direction(grad, hess)
                decrement = -float(grad @ step)
                if decrement / 2.0 <= self.centering_tol:
                    break
                if self.newton_steps >= self.max_newton:
                    raise LmiNoConvergence(
                        f"LMI solver exhausted {self.max_newton} Newton steps (margin {t:.3e}, barrier weight {s:.1e})"
                    )

                current = self._objective(y, t, s)
                alpha = 1.0
                while alpha > 1e-12:
                    y_new = y + alpha * step[:p]
                    t_new = t + alpha * step[p]
                    trial = self._objective(y_new, t_new, s)
                    if trial is not None and trial <= current - 0.25 * alpha * decrement:
                        break
                    alpha *= 0.5
                else:
                    raise LmiNoConvergence(
                        f"LMI line search stalled after {self.newton_steps} Newton steps (margin {t:.3e})"
                    )
                y, t = y_new, t_new
                self.newton_steps += 1
                logger.debug(f"LMI - step {self.newton_steps}: t={t:.6e} s={s:.1e} alpha={alpha:.2e}")

            upper = t + nu / s
            if upper < self.tol:
                logger.debug(f"LMI - infeasible after {self.newton_steps} Newton steps, margin bound {upper:.3e}")
                return Infeasible(
                    margin=upper,
                    message=f"no strictly feasible point: best achievable margin <= {upper:.3e} (tol {self.tol:.1e})",
                )
            s *= self.barrier_growth


def solve_feasibility(system: LmiSystem, tol: float = DEFAULT_TOL, max_newton: int = DEFAULT_MAX_NEWTON,
                      radii: Sequence[float] = RADIUS_SCHEDULE) -> Union[LmiSolution, Infeasible]:
    """
    Find assignments making every constraint matrix have minimum eigenvalue >= tol.

    Each radius in `radii` is tried in turn until one yields a solution; every
    solve gets its own Newton budget.

    Returns:
        LmiSolution on success, Infeasible when the maximized margin is certified
        below tol on the largest ball

    Raises:
        LmiNoConvergence: the Newton budget ran out before a verdict
        ConfigurationError: malformed system or empty radius schedule
    """
    if not radii:
        raise ConfigurationError("LMI radius schedule is empty")
    result = None
    for radius in radii:
        result = InteriorPointSolver(tol=tol, max_newton=max_newton, radius=radius).solve(system)
        if isinstance(result, LmiSolution):
            return result
        logger.debug(f"LMI - no certificate within radius {radius:.0e} (margin bound {result.margin:.3e})")
    return result
