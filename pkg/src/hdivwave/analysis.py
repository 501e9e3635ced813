"""Error norms, quadrature defects, and convergence rates.

Two error measures are reported per run.  The energy error compares the
discrete solution against the exact one,

    ||dt u(T) - v_h||_L2 + ||div(u(T) - u_h)||_L2,

the discrete error compares against the interpolated exact solution,

    (||p1(dt u(T)) - v_h||_h^2 + ||div(I_h u(T) - u_h)||_L2^2)^(1/2),

with p1 the cellwise componentwise linear L2 projection, I_h the
canonical interpolant and ||.||_h the lumped norm.  Both decay with
second order; rates, not absolute values, are what the acceptance tests
pin down.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import DofMap, interpolate_field
from .quadrature import REF_MIDPOINT, lumped_rule, oracle_rule


def eoc(pairs: list[tuple[float, float]]) -> list[float]:
    """Rates log(e_{i-1}/e_i) / log(h_{i-1}/h_i); NaN where undefined."""
    out = []
    for (h0, e0), (h1, e1) in zip(pairs, pairs[1:]):
        if e0 <= 0 or e1 <= 0 or h0 <= h1:
            out.append(math.nan)
        else:
            out.append(math.log(e0 / e1) / math.log(h0 / h1))
    return out


# -- cellwise linear projection ----------------------------------------


@dataclass
class P1Field:
    """Per-cell linear vector fields c0 + c1 (x - xc) + c2 (y - yc).

    Stored per cell group, aligned with the dofmap's groups; evaluation
    must go through the owning cell since the field jumps across edges.
    """

    coeffs: list[np.ndarray]    # per group (nc, 3, 2)
    centers: list[np.ndarray]   # per group (nc, 2)

    def eval(self, gi: int, phys_pts: np.ndarray) -> np.ndarray:
        """Values at physical points, (nc, m, 2) for group gi."""
        c = self.coeffs[gi]
        rel = phys_pts - self.centers[gi][:, None, :]
        return (c[:, None, 0, :]
                + rel[:, :, 0, None] * c[:, None, 1, :]
                + rel[:, :, 1, None] * c[:, None, 2, :])


def project_p1_field(dofmap: DofMap, f, degree: int = 6) -> P1Field:
    """Componentwise cellwise L2 projection of a smooth field onto P1."""
    coeffs, centers = [], []
    for g in dofmap.groups:
        rule = oracle_rule(g.shape, degree)
        phys = g.phys_points(rule.points)             # (nc, m, 2)
        w = g.detJ[:, None] * rule.weights[None, :]
        xc = g.phys_points(REF_MIDPOINT[g.shape][None, :])[:, 0, :]
        rel = phys - xc[:, None, :]
        B = np.stack([np.ones_like(rel[:, :, 0]), rel[:, :, 0], rel[:, :, 1]],
                     axis=-1)                         # (nc, m, 3)
        G = np.einsum("nm,nmi,nmj->nij", w, B, B)
        fv = np.asarray(f(phys.reshape(-1, 2)), dtype=float).reshape(g.n, -1, 2)
        rhs = np.einsum("nm,nmi,nmk->nik", w, B, fv)  # (nc, 3, 2)
        coeffs.append(np.linalg.solve(G, rhs))
        centers.append(xc)
    return P1Field(coeffs=coeffs, centers=centers)


# -- quadrature defect --------------------------------------------------


def sigma_cells(dofmap: DofMap, u, v_coeffs: np.ndarray,
                degree: int = 6) -> np.ndarray:
    """Per-cell lumped-minus-exact defect of the mass form.

    ``u`` is a callable field or a P1Field; ``v_coeffs`` a discrete
    field.  Indexed by global cell id.
    """
    out = np.zeros(dofmap.mesh.n_cells)
    for gi, g in enumerate(dofmap.groups):
        lr = lumped_rule(g.shape)
        orc = oracle_rule(g.shape, degree)
        acc = np.zeros(g.n)
        for rule_pts, w in (
            (lr.points, g.area[:, None] * lr.weights[None, :]),
            (orc.points, -g.detJ[:, None] * orc.weights[None, :]),
        ):
            phys = g.phys_points(rule_pts)
            if isinstance(u, P1Field):
                uv = u.eval(gi, phys)
            else:
                uv = np.asarray(u(phys.reshape(-1, 2)),
                                dtype=float).reshape(g.n, -1, 2)
            vv = g.eval_values(v_coeffs, rule_pts)
            acc += np.einsum("nm,nmk,nmk->n", w, uv, vv)
        out[g.cell_ids] = acc
    return out


def sigma_h(dofmap: DofMap, u, v_coeffs: np.ndarray,
            degree: int = 6) -> float:
    return float(np.sum(sigma_cells(dofmap, u, v_coeffs, degree)))


def div_norm_cells(dofmap: DofMap, coeffs: np.ndarray,
                   degree: int = 6) -> np.ndarray:
    """Per-cell L2 norm of the divergence of a discrete field."""
    out = np.zeros(dofmap.mesh.n_cells)
    for g in dofmap.groups:
        rule = oracle_rule(g.shape, degree)
        w = g.detJ[:, None] * rule.weights[None, :]
        dv = g.eval_divs(coeffs, rule.points)
        out[g.cell_ids] = np.sqrt(np.einsum("nm,nm->n", w, dv**2))
    return out


# -- global norms -------------------------------------------------------


def field_l2_error(dofmap: DofMap, coeffs: np.ndarray, exact=None,
                   degree: int = 6) -> float:
    """||u_h - exact||_L2 over the mesh (exact=None gives ||u_h||)."""
    acc = 0.0
    for g in dofmap.groups:
        rule = oracle_rule(g.shape, degree)
        w = g.detJ[:, None] * rule.weights[None, :]
        vals = g.eval_values(coeffs, rule.points)
        if exact is not None:
            phys = g.phys_points(rule.points)
            vals = vals - np.asarray(exact(phys.reshape(-1, 2)),
                                     dtype=float).reshape(g.n, -1, 2)
        acc += float(np.einsum("nm,nmk,nmk->", w, vals, vals))
    return math.sqrt(acc)


def div_l2_error(dofmap: DofMap, coeffs: np.ndarray, exact_div=None,
                 degree: int = 6) -> float:
    acc = 0.0
    for g in dofmap.groups:
        rule = oracle_rule(g.shape, degree)
        w = g.detJ[:, None] * rule.weights[None, :]
        dv = g.eval_divs(coeffs, rule.points)
        if exact_div is not None:
            phys = g.phys_points(rule.points)
            dv = dv - np.asarray(exact_div(phys.reshape(-1, 2)),
                                 dtype=float).reshape(g.n, -1)
        acc += float(np.einsum("nm,nm->", w, dv**2))
    return math.sqrt(acc)


def lumped_l2_error(dofmap: DofMap, coeffs: np.ndarray, p1: P1Field) -> float:
    """Lumped-norm distance between a discrete field and a P1Field."""
    acc = 0.0
    for gi, g in enumerate(dofmap.groups):
        rule = lumped_rule(g.shape)
        w = g.area[:, None] * rule.weights[None, :]
        vals = g.eval_values(coeffs, rule.points)
        phys = g.phys_points(rule.points)
        diff = vals - p1.eval(gi, phys)
        acc += float(np.einsum("nm,nmk,nmk->", w, diff, diff))
    return math.sqrt(acc)


# -- commuting-interpolation residual ----------------------------------


def commuting_residuals(dofmap: DofMap, u, u_div, stiffness,
                        degree: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Residuals of (div(u - I_h u), div basis_i) and their scales.

    Returns (r, s) with r_i the residual against global basis function i
    and s_i = ||div basis_i||_L2; the interpolant commutes when
    |r_i| <= tol * s_i for all i.
    """
    coeffs = interpolate_field(dofmap, u)
    b = np.zeros(dofmap.ndof)
    for g in dofmap.groups:
        rule = oracle_rule(g.shape, degree)
        phys = g.phys_points(rule.points)
        w = g.detJ[:, None] * rule.weights[None, :]
        ud = np.asarray(u_div(phys.reshape(-1, 2)), dtype=float).reshape(g.n, -1)
        D = g.basis.divergences(rule.points)          # (dim, m)
        DS = g.scale[:, :, None] * D[None, :, :] / g.detJ[:, None, None]
        loc = np.einsum("nm,nam->na", w * ud, DS)
        np.add.at(b, g.l2g, loc)
    r = b - stiffness @ coeffs
    s = np.sqrt(stiffness.diagonal())
    return r, s


@dataclass(frozen=True)
class ErrorReport:
    h: float
    energy_error: float
    discrete_error: float
    vel_l2: float
    div_l2: float
    vel_h: float
    div_h: float
    eoc_energy: float | None = None
    eoc_discrete: float | None = None


def error_report(dofmap: DofMap, u_coeffs: np.ndarray, v_coeffs: np.ndarray,
                 exact_u, exact_vel, exact_div, h: float,
                 degree: int = 6) -> ErrorReport:
    """Both error measures for a final-time solution pair."""
    vel_l2 = field_l2_error(dofmap, v_coeffs, exact_vel, degree)
    divl2 = div_l2_error(dofmap, u_coeffs, exact_div, degree)
    p1v = project_p1_field(dofmap, exact_vel, degree)
    vel_h = lumped_l2_error(dofmap, v_coeffs, p1v)
    interp = interpolate_field(dofmap, exact_u)
    div_h = div_l2_error(dofmap, interp - u_coeffs, None, degree)
    return ErrorReport(
        h=h,
        energy_error=vel_l2 + divl2,
        discrete_error=math.sqrt(vel_h**2 + div_h**2),
        vel_l2=vel_l2,
        div_l2=divl2,
        vel_h=vel_h,
        div_h=div_h,
    )


def attach_rates(reports: list[ErrorReport]) -> list[ErrorReport]:
    """Fill the eoc fields from consecutive report pairs."""
    from dataclasses import replace

    out = list(reports)
    re = eoc([(r.h, r.energy_error) for r in reports])
    rd = eoc([(r.h, r.discrete_error) for r in reports])
    for i, (a, b) in enumerate(zip(re, rd), start=1):
        out[i] = replace(out[i],
                         eoc_energy=None if math.isnan(a) else a,
                         eoc_discrete=None if math.isnan(b) else b)
    return out
