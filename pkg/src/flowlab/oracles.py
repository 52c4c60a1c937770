"""Brute-force reference computations, built on discretisations unrelated to the production paths.

* stripe potential: closed form, cross-checked by a 1D finite-difference solve;
* transmission problem: Shortley-Weller cut-cell solve on a grid, jumps of the
  normal derivative from one-sided harmonic-polynomial fits;
* second-variation spectrum: polygon assembly with midpoint quadrature and the
  Ewald Green's function;
* turning number: unwrapped tangent angle of a finely sampled curve.

Each oracle reports two resolutions and an error estimate from their difference.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .errors import OracleFailure
from .geometry import TWO_PI, BoundarySet, MarkerCurve, TrigCurve, canon, circle, lamella, wrap
from .greens import DEFAULT_EVALUATOR, INV_2PI, GreensEvaluator
from .grid import cell_fractions


@dataclass
class OracleResult:
    name: str
    values: dict
    method: str
    resolution: tuple
    error: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["resolution"] = list(self.resolution)
        return out


def _richardson(coarse, fine, order: int):
    """(extrapolated value, error estimate of the fine value)."""
    coarse = np.asarray(coarse, dtype=float)
    fine = np.asarray(fine, dtype=float)
    diff = (fine - coarse) / (2**order - 1)
    return fine + diff, np.abs(diff)


# ---------------------------------------------------------------------------
# stripe


def stripe_closed_form(width: float) -> dict:
    """Potential of the stripe |x| < w/2: piecewise quadratic in x with zero mean."""
    w = float(width)
    a = w * (1 - w) * (2 - w) / 12.0  # v at the stripe centre
    return {
        "v0": a,
        "v_on_boundary": w * (1 - w) * (1 - 2 * w) / 6.0,
        "dnu_v": -w * (1 - w),
        "nonlocal_energy": w**2 * (1 - w) ** 2 / 3.0,
    }


def _stripe_fd(width: float, n: int) -> dict:
    """Periodic 3-point solve of -v'' = u - m on x_i = i / n - 1/2, stripe centred at 0."""
    x = np.arange(n) / n - 0.5
    h = 1.0 / n
    half = 0.5 * width
    u = np.where(np.abs(x) < half - 1e-12, 1.0, -1.0)
    u[np.isclose(np.abs(x), half, atol=1e-12)] = 0.0
    f = u - (2 * width - 1)
    lap = sp.diags([np.full(n - 1, -1.0), np.full(n, 2.0), np.full(n - 1, -1.0)], [-1, 0, 1], format="lil")
    lap[0, n - 1] = -1.0
    lap[n - 1, 0] = -1.0
    # bordered with the mean constraint
    a = sp.bmat([[lap.tocsr() / h**2, np.ones((n, 1))], [np.ones((1, n)), None]], format="csc")
    sol = spla.spsolve(a, np.append(f, 0.0))
    v = sol[:n]
    inner = np.nonzero(np.abs(x) <= half + 1e-12)[0]
    right = inner[np.argsort(x[inner])[-3:]]  # three inside nodes nearest x = w/2
    p = np.polyfit(x[right], v[right], 2)
    energy = float(np.sum(((np.roll(v, -1) - v) / h) ** 2) * h)
    return {
        "v0": float(np.interp(0.0, x, v)),
        "v_on_boundary": float(np.polyval(p, half)),
        "dnu_v": float(np.polyval(np.polyder(p), half)),
        "nonlocal_energy": energy,
    }


def stripe_potential_oracle(width: float = 0.5, n: int = 2048) -> OracleResult:
    if not 0 < width < 1:
        raise ValueError("width must lie in (0, 1)")
    exact = stripe_closed_form(width)
    coarse, fine = _stripe_fd(width, n // 2), _stripe_fd(width, n)
    err = {}
    for k in exact:
        _, e = _richardson(coarse[k], fine[k], 2)
        err[k] = {"richardson": float(e), "closed_form_vs_fd": abs(fine[k] - exact[k])}
    return OracleResult(
        name=f"stripe_potential(width={width:g})",
        values=exact,
        method="closed-form piecewise quadratic; checked by periodic 3-point FD solve",
        resolution=(n // 2, n),
        error=err,
    )


# ---------------------------------------------------------------------------
# transmission problem on a grid


class _Side:
    """Sign of the signed distance at grid nodes x_ij = (i, j) / m (True = inside E)."""

    def __init__(self, b: BoundarySet, m: int):
        frac = cell_fractions(b, m)
        # node (i, j) touches cells (i-1..i, j-1..j)
        around = np.stack([np.roll(frac, (a, c), axis=(0, 1)) for a in (0, 1) for c in (0, 1)])
        lo, hi = around.min(axis=0), around.max(axis=0)
        inside = lo >= 1 - 1e-12
        near = ~(inside | (hi <= 1e-12))
        ii, jj = np.nonzero(near)
        pts = np.column_stack([ii, jj]) / m
        sd = np.full((m, m), np.nan)
        sd[ii, jj] = b.projector.project(pts)[0]
        inside[ii, jj] = sd[ii, jj] < 0
        self.inside = inside
        self.sd = sd


def _g_interpolants(b: BoundarySet, g: np.ndarray):
    return [TrigCurve(part[:, None], np.zeros(1)) for part in b.split(g)]


def _crossings(b, side: _Side, m: int, g_interp, axis: int, sign: int):
    """Arms from node p to its neighbour along (axis, sign) that cross dE: (p index, theta, g, point)."""
    q_inside = np.roll(side.inside, -sign, axis=axis)
    ii, jj = np.nonzero(side.inside != q_inside)
    if ii.size == 0:
        return ii, jj, np.zeros(0), np.zeros(0), np.zeros((0, 2))
    e = np.zeros(2)
    e[axis] = sign
    p = np.column_stack([ii, jj]) / m
    qi, qj = (ii + (sign if axis == 0 else 0)) % m, (jj + (sign if axis == 1 else 0)) % m
    sp_, sq = side.sd[ii, jj], side.sd[qi, qj]
    if np.any(np.isnan(sp_)) or np.any(np.isnan(sq)):
        raise OracleFailure("crossing arm outside the classified band")
    theta = np.clip(sp_ / (sp_ - sq), 0.0, 1.0)
    h = 1.0 / m
    proj = b.projector
    for _ in range(4):
        x = p + (theta * h)[:, None] * e
        d, _, nrm, comp, u = proj.project(x)
        slope = h * (nrm @ e)
        theta = np.clip(theta - d / np.where(np.abs(slope) > 1e-3 * h, slope, 1e-3 * h), 0.0, 1.0)
    x = p + (theta * h)[:, None] * e
    _, _, _, comp, u = proj.project(x)
    gv = np.empty(len(theta))
    for c, interp in enumerate(g_interp):
        sel = comp == c
        if sel.any():
            gv[sel] = interp(u[sel])[:, 0]
    return ii, jj, theta, gv, x


def _solve_transmission(b: BoundarySet, g: np.ndarray, m: int):
    side = _Side(b, m)
    g_interp = _g_interpolants(b, g)
    h = 1.0 / m
    n = m * m
    idx = np.arange(n).reshape(m, m)
    diag = np.zeros((m, m))
    rhs = np.zeros((m, m))
    rows, cols, vals = [], [], []
    points, pvals = [], []
    for axis in (0, 1):
        arms = {}
        for sign in (1, -1):
            ii, jj, theta, gv, x = _crossings(b, side, m, g_interp, axis, sign)
            length = np.ones((m, m))
            value = np.full((m, m), np.nan)
            length[ii, jj] = np.maximum(theta, 1e-6)
            value[ii, jj] = gv
            arms[sign] = (length, value)
            points.append(x)
            pvals.append(gv)
        (lp, vp), (lm, vm) = arms[1], arms[-1]
        # Shortley-Weller: 2/(a+ + a-) [(u+ - u)/a+ + (u- - u)/a-], lengths in units of h
        s = 2.0 / (lp + lm)
        cp, cm = s / lp, s / lm
        diag -= cp + cm
        for sign, c, vv in ((1, cp, vp), (-1, cm, vm)):
            cut = ~np.isnan(vv)
            rhs[cut] -= c[cut] * vv[cut]
            nb = np.roll(idx, -sign, axis=axis)
            free = ~cut
            rows.append(idx[free])
            cols.append(nb[free])
            vals.append(c[free])
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    a = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    w = spla.spsolve(a.tocsc(), rhs.ravel())
    res = np.abs(a @ w - rhs.ravel()).max()
    if not np.all(np.isfinite(w)) or res > 1e-8 * max(1.0, np.abs(rhs).max()):
        raise OracleFailure(f"grid transmission solve failed (residual {res:.3e})")
    return w.reshape(m, m), side, np.vstack(points), np.concatenate(pvals), h


def _harmonic_basis(z: np.ndarray, degree: int) -> np.ndarray:
    cols = [np.ones_like(z.real)]
    zk = np.ones_like(z)
    for _ in range(degree):
        zk = zk * z
        cols += [zk.real, zk.imag]
    return np.column_stack(cols)


def _one_sided_derivatives(b, g, w, side, cpoints, cvals, h, radius=4.0, degree=4):
    m = w.shape[0]
    y = b.nodes
    nu = b.stack("normal")
    ctree = cKDTree(canon(cpoints), boxsize=1.0)
    reach = int(math.ceil(radius)) + 1
    offs = np.arange(-reach, reach + 1)
    oi, oj = np.meshgrid(offs, offs, indexing="ij")
    oi, oj = oi.ravel(), oj.ravel()
    out = np.empty((len(y), 2))
    for k in range(len(y)):
        base = np.floor(y[k] * m).astype(int)
        gi, gj = (base[0] + oi) % m, (base[1] + oj) % m
        pos = y[k] + wrap(np.column_stack([base[0] + oi, base[1] + oj]) / m - y[k])
        near = np.hypot(*(pos - y[k]).T) <= radius * h
        cidx = ctree.query_ball_point(canon(y[k]), radius * h)
        cpos = y[k] + wrap(cpoints[cidx] - y[k])
        for s, flag in enumerate((True, False)):
            sel = near & (side.inside[gi, gj] == flag)
            pts = np.vstack([pos[sel], cpos, y[k][None]])
            vals = np.concatenate([w[gi[sel], gj[sel]], cvals[cidx], [g[k]]])
            wt = np.ones(len(vals))
            wt[-1] = 10.0
            z = ((pts[:, 0] - y[k, 0]) + 1j * (pts[:, 1] - y[k, 1])) / h
            basis = _harmonic_basis(z, degree)
            coef = np.linalg.lstsq(basis * wt[:, None], vals * wt, rcond=None)[0]
            out[k, s] = (coef[1] * nu[k, 0] + coef[2] * nu[k, 1]) / h
    return out  # columns: inside, outside


def transmission_jump(b: BoundarySet, g, m: int = 512) -> dict:
    """[d_nu w] = d_nu w_out - d_nu w_in at the nodes for w harmonic off dE with w = g on dE."""
    g = np.asarray(g, dtype=float)
    w, side, cpoints, cvals, h = _solve_transmission(b, g, m)
    d = _one_sided_derivatives(b, g, w, side, cpoints, cvals, h)
    return {"jump": d[:, 1] - d[:, 0], "inside": d[:, 0], "outside": d[:, 1]}


def transmission_grid_oracle(b: BoundarySet, g, m: int = 512) -> OracleResult:
    if m < 256:
        raise ValueError("the transmission oracle needs M >= 256")
    coarse = transmission_jump(b, g, m // 2)["jump"]
    fine = transmission_jump(b, g, m)["jump"]
    _, err = _richardson(coarse, fine, 2)
    scale = max(float(np.abs(fine).max()), 1e-300)
    return OracleResult(
        name="transmission_jump",
        values={"jump": fine.tolist()},
        method="Shortley-Weller cut-cell Laplacian, one-sided harmonic polynomial fits",
        resolution=(m // 2, m),
        error={"max_abs": float(err.max()), "relative": float(err.max() / scale)},
    )


# ---------------------------------------------------------------------------
# dense spectrum of the second variation on the polygon


def _polygon(b: BoundarySet):
    segs = []
    for c in b.components:
        x = c.nodes
        y = np.roll(x, -1, axis=0)
        y[-1] = y[-1] + c.winding  # close the lift of an essential curve
        segs.append((x, y))
    return segs


def polygon_pi(b: BoundarySet, gamma: float, evaluator: GreensEvaluator = DEFAULT_EVALUATOR):
    """(Q, W) of the second-variation form on nodal values, piecewise-linear on the polygon."""
    n = b.n_nodes
    q = np.zeros((n, n))
    wts = np.zeros(n)
    nodes_nu = np.zeros((n, 2))
    mids, lens, seg_nu, seg_nodes = [], [], [], []
    offsets = b.offsets
    for ci, (x, y) in enumerate(_polygon(b)):
        lo = offsets[ci]
        k = len(x)
        d = y - x
        l = np.hypot(d[:, 0], d[:, 1])
        tau = d / l[:, None]
        nrm = np.column_stack([tau[:, 1], -tau[:, 0]])
        i = np.arange(k) + lo
        j = (np.arange(k) + 1) % k + lo
        # Dirichlet form sum (phi_j - phi_i)^2 / l
        np.add.at(q, (i, i), 1 / l)
        np.add.at(q, (j, j), 1 / l)
        np.add.at(q, (i, j), -1 / l)
        np.add.at(q, (j, i), -1 / l)
        w = 0.5 * (l + np.roll(l, 1))
        prev = np.roll(tau, 1, axis=0)
        turn = np.arctan2(prev[:, 0] * tau[:, 1] - prev[:, 1] * tau[:, 0], np.einsum("ij,ij->i", prev, tau))
        kappa = turn / w
        q[i, i] -= kappa**2 * w
        wts[i] = w
        nn = nrm + np.roll(nrm, 1, axis=0)
        nodes_nu[i] = nn / np.linalg.norm(nn, axis=1)[:, None]
        mids.append(x + 0.5 * d)
        lens.append(l)
        seg_nu.append(nrm)
        seg_nodes.append(np.column_stack([i, j]))
    if gamma > 0:
        mids = np.vstack(mids)
        lens = np.concatenate(lens)
        seg_nu = np.vstack(seg_nu)
        seg_nodes = np.vstack(seg_nodes)
        reg = evaluator.regular_at_zero()
        ns = len(lens)
        gmat = np.empty((ns, ns))
        diff = mids[:, None, :] - mids[None, :, :]
        off = ~np.eye(ns, dtype=bool)
        gmat[off] = evaluator.value(diff[off])
        # int_0^l int_0^l log|s - t| = l^2 (log l - 3/2)
        np.fill_diagonal(gmat, reg - INV_2PI * (np.log(lens) - 1.5))
        kseg = gmat * np.outer(lens, lens)
        p = np.zeros((ns, n))
        p[np.arange(ns), seg_nodes[:, 0]] = 0.5
        p[np.arange(ns), seg_nodes[:, 1]] += 0.5
        gram = p.T @ kseg @ p
        # grad v(x_i) = -2 sum_s int_s G(x_i - y) nu_s, log-exact on the two segments at x_i
        xn = b.nodes
        dn = xn[:, None, :] - mids[None, :, :]
        gv = evaluator.value(dn.reshape(-1, 2)).reshape(n, ns) * lens[None, :]
        touch = (seg_nodes[None, :, 0] == np.arange(n)[:, None]) | (seg_nodes[None, :, 1] == np.arange(n)[:, None])
        endpoint = lens * (reg - INV_2PI * (np.log(lens) - 1.0))
        gv = np.where(touch, endpoint[None, :], gv)
        grad = -2.0 * gv @ seg_nu
        dv_dn = np.einsum("ij,ij->i", grad, nodes_nu)
        q += 8.0 * gamma * gram + 4.0 * gamma * np.diag(dv_dn * wts)
    return 0.5 * (q + q.T), wts, nodes_nu


def _dense_eigenvalues(b: BoundarySet, gamma: float, evaluator) -> np.ndarray:
    q, w, nu = polygon_pi(b, gamma, evaluator)
    a = (nu * w[:, None]).T @ nu
    lam, vec = np.linalg.eigh(a)
    cons = [np.ones(len(w))] + [nu @ vec[:, i] for i in range(2) if lam[i] > 1e-8]
    c = np.column_stack(cons)
    z = scipy.linalg.null_space((c * w[:, None]).T)
    return scipy.linalg.eigh(z.T @ q @ z, z.T @ (w[:, None] * z), eigvals_only=True)


def dense_spectrum_oracle(
    b: BoundarySet, gamma: float, n_small: int = 128, count: int = 8, evaluator: GreensEvaluator = DEFAULT_EVALUATOR
) -> OracleResult:
    if n_small > 128:
        raise ValueError("the dense oracle is limited to 128 nodes per component")
    fine_b = b.resampled(n_small)
    coarse_b = b.resampled(n_small // 2)
    fine = _dense_eigenvalues(fine_b, gamma, evaluator)[:count]
    coarse = _dense_eigenvalues(coarse_b, gamma, evaluator)[:count]
    ext, err = _richardson(coarse, fine, 2)
    return OracleResult(
        name="dense_spectrum",
        values={"eigenvalues": fine.tolist(), "extrapolated": ext.tolist()},
        method="piecewise-linear polygon form, midpoint quadrature, Ewald Green's function",
        resolution=(n_small // 2, n_small),
        error={"eigenvalues": err.tolist()},
    )


# ---------------------------------------------------------------------------
# turning number


def turning_number_oracle(c: MarkerCurve, upsample: int = 16) -> float:
    """Total change of the unwrapped tangent angle over 2 pi."""
    u = TWO_PI * np.arange(c.n * upsample + 1) / (c.n * upsample)
    z1 = c.trig(u, 1)
    ang = np.unwrap(np.arctan2(z1[:, 1], z1[:, 0]))
    return float((ang[-1] - ang[0]) / TWO_PI)


# ---------------------------------------------------------------------------
# manifest


def run_all(m: int = 512) -> list[OracleResult]:
    """The oracle values consumed by the test-suite, each with its resolution study."""
    out = [stripe_potential_oracle(0.5), stripe_potential_oracle(1.0 / 3.0)]
    for name, b in (("circle r=0.2", circle(0.2, n=128)), ("stripe w=0.5", lamella(0.5, 128))):
        for gamma in (0.0, 1.0):
            res = dense_spectrum_oracle(b, gamma, 128)
            res.name = f"dense_spectrum({name}, gamma={gamma:g})"
            out.append(res)
    from .flows import ms_data

    pert = circle(0.35, n=128, modes=[(3, 0.02)])
    for gamma in (0.0, 0.1):
        res = transmission_grid_oracle(pert, ms_data(pert, gamma), m)
        res.name = f"transmission_jump(perturbed circle, gamma={gamma:g})"
        out.append(res)
    tn = [turning_number_oracle(c) for c in circle(0.2, n=64, modes=[(5, 0.03)]).components]
    out.append(
        OracleResult(
            name="turning_number(perturbed circle)",
            values={"turning_number": tn},
            method="unwrapped tangent angle, 16x upsampled",
            resolution=(8, 16),
            error={"abs": abs(tn[0] - round(tn[0]))},
        )
    )
    return out


def write_manifest(results, path) -> None:
    with open(path, "w") as fh:
        json.dump([r.as_dict() for r in results], fh, indent=2, sort_keys=True)
        fh.write("\n")


__all__ = [
    "OracleResult",
    "dense_spectrum_oracle",
    "polygon_pi",
    "run_all",
    "stripe_closed_form",
    "stripe_potential_oracle",
    "transmission_grid_oracle",
    "transmission_jump",
    "turning_number_oracle",
    "write_manifest",
]
