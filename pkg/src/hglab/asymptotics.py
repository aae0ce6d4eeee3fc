"""Characteristic asymptotic systems near the light cone.

Each unknown phi_I is represented through U_I = (d_t - d_r) Phi_I with
Phi_I = r phi_I, sampled on a fixed grid in q = r - t.  Along outgoing rays
the slow time is ell = ln(s / s0) and every factor 1/r on the right-hand
side is replaced by 1/s, so a quadratic term r^{-1} A U U becomes
d_ell U = A U U.  On functions of q, d_t - d_r = -2 d_q, hence
Phi(q) = (1/2) int_q^inf U dq'.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

OMEGA_HAT_T = -1.0

FRAME = ("L", "Lb", "S1", "S2")
FRAME_METRIC = np.array([[0.0, -2.0, 0.0, 0.0],
                         [-2.0, 0.0, 0.0, 0.0],
                         [0.0, 0.0, 1.0, 0.0],
                         [0.0, 0.0, 0.0, 1.0]])
FRAME_METRIC_INV = np.linalg.inv(FRAME_METRIC)
FRAME_PAIRS: Tuple[Tuple[int, int], ...] = tuple((a, b) for a in range(4) for b in range(a, 4))
PAIR_NAMES: Tuple[str, ...] = tuple(FRAME[a] + FRAME[b] for a, b in FRAME_PAIRS)
# components D_{LT}, T in {L, S1, S2}: fixed by the asymptotic wave coordinate condition
WAVEC_PAIRS = ("LL", "LS1", "LS2")
TU_PAIRS = tuple(p for p in PAIR_NAMES if p != "LbLb")
# source prefactors of the Lbar-Lbar equation: -(K_P P + K_PHI dPhi dPhi) / r
K_P = 2.0
K_PHI = 1.0
H_LL_MODES = ("zero", "mass-profile", "self-coupled")
# relative rise of sup|U| over the run above which a component counts as growing
GROWTH_TOL = 0.1


class AsymptoticError(ValueError):
    pass


@dataclass(frozen=True)
class Coupling:
    """Term coef * d^alpha phi_J * d^beta phi_K in the equation for phi_target."""
    target: str
    J: str
    alpha: Tuple[int, ...]
    K: str
    beta: Tuple[int, ...]
    coef: float

    def normalized(self) -> "Coupling":
        """Order the factors so that |alpha| <= |beta|."""
        if len(self.alpha) > len(self.beta):
            return Coupling(self.target, self.K, self.beta, self.J, self.alpha, self.coef)
        return self


@dataclass
class CharSystem:
    """Asymptotic system in generic or Einstein mode.

    Generic mode carries quadratic couplings A_{I,alpha beta}^{JK}.  Einstein
    mode carries the frame-component coupling table of the Lbar-Lbar
    equation, the H_LL law and the mass M.
    """
    unknowns: Tuple[str, ...]
    couplings: List[Coupling] = field(default_factory=list)
    omega: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    mode: str = "generic"
    M: float = 0.0
    h_ll_mode: str = "zero"
    table: Dict[str, List[Tuple[float, str, str]]] = field(default_factory=dict)
    impose_wavec: bool = True
    name: str = ""

    def __post_init__(self):
        if self.mode not in ("generic", "einstein"):
            raise AsymptoticError(f"unknown system mode {self.mode!r}")
        known = set(self.unknowns)
        for c in self.couplings:
            for lab in (c.target, c.J, c.K):
                if lab not in known:
                    raise AsymptoticError(f"coupling refers to unknown {lab!r}")
            if len(c.alpha) + len(c.beta) == 0 or max(len(c.alpha), len(c.beta)) > 2:
                raise AsymptoticError("derivative orders must satisfy |alpha| <= |beta| <= 2, |beta| >= 1")
            if any(not 0 <= a <= 3 for a in c.alpha + c.beta):
                raise AsymptoticError("derivative indices must lie in 0..3")

    def self_couplings(self, target: str) -> List[Tuple[float, str, str]]:
        return [e for e in self.table.get(target, []) if e[1] == target and e[2] == target]


def omega_hat(omega: Sequence[float]) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    return np.concatenate([[OMEGA_HAT_T], w])


def _term_weight(c: Coupling, oh: np.ndarray) -> float:
    n, m = len(c.alpha), len(c.beta)
    val = c.coef * (-2.0) ** (-m - n)
    for a in c.alpha + c.beta:
        val *= oh[a]
    return float(val)


def coefficient_A(system: CharSystem, omega: Sequence[float], I: str, J: str, K: str,
                  n: int, m: int) -> float:
    """(-2)^{-m-n} sum over |alpha| = n, |beta| = m of A_{I,alpha beta}^{JK} omega_hat^alpha omega_hat^beta."""
    if not (0 <= n <= m <= 2 and m >= 1):
        raise AsymptoticError(f"index out of range: need n <= m <= 2 and m >= 1, got n={n}, m={m}")
    for lab in (I, J, K):
        if lab not in system.unknowns:
            raise AsymptoticError(f"unknown label {lab!r}")
    oh = omega_hat(omega)
    total = 0.0
    for c in system.couplings:
        c = c.normalized()
        if (c.target, c.J, c.K, len(c.alpha), len(c.beta)) == (I, J, K, n, m):
            total += _term_weight(c, oh)
    return total


def reduced_terms(system: CharSystem, omega: Optional[Sequence[float]] = None):
    """Nonzero (I, J, n, K, m, A) entries of the asymptotic system at ``omega``."""
    oh = omega_hat(system.omega if omega is None else omega)
    acc: Dict[Tuple[str, str, int, str, int], float] = {}
    for c in system.couplings:
        c = c.normalized()
        key = (c.target, c.J, len(c.alpha), c.K, len(c.beta))
        acc[key] = acc.get(key, 0.0) + _term_weight(c, oh)
    return [k + (v,) for k, v in acc.items() if v != 0.0]


def sphere_directions(n: int = 64) -> np.ndarray:
    """Fibonacci points on the unit sphere, shape (n, 3)."""
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    phi = math.pi * (1.0 + 5 ** 0.5) * k
    rho = np.sqrt(1.0 - z * z)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def satisfies_null_condition(system: CharSystem, n_dirs: int = 64, tol: float = 1e-13) -> bool:
    for w in sphere_directions(n_dirs):
        for entry in reduced_terms(system, w):
            if abs(entry[-1]) > tol:
                return False
    return True


# -- Einstein system --------------------------------------------------------

def quadratic_P_table() -> Dict[Tuple[str, str], float]:
    """Coefficients c_JK (J <= K in pair order) with P(X, X) = sum c_JK X_J X_K.

    P(D, E) = 1/4 tr D tr E - 1/2 D^{ab} E_ab with frame indices raised by the
    inverse of the frame metric (L.Lbar = -2, S_A.S_B = delta_AB).
    """
    G = FRAME_METRIC_INV

    def basis(p):
        a, b = FRAME_PAIRS[p]
        X = np.zeros((4, 4))
        X[a, b] = X[b, a] = 1.0
        return X

    def P(X, Y):
        return 0.25 * np.sum(G * X) * np.sum(G * Y) - 0.5 * np.einsum("ac,bd,cd,ab->", G, G, X, Y)

    out: Dict[Tuple[str, str], float] = {}
    for p, q in product(range(10), repeat=2):
        if q < p:
            continue
        val = P(basis(p), basis(q)) * (1.0 if p == q else 2.0)
        if abs(val) > 1e-15:
            out[(PAIR_NAMES[p], PAIR_NAMES[q])] = float(val)
    return out


def build_einstein_system(M: float = 0.0, h_ll_mode: str = "zero", impose_wavec: bool = True,
                          omega: Sequence[float] = (0.0, 0.0, 1.0)) -> CharSystem:
    """Null-frame asymptotic system of the reduced Einstein-scalar equations.

    Unknowns are the ten frame components of d_q D and Phi.  Only the Lbar-Lbar
    equation carries a quadratic source, -(K_P P + K_PHI dPhi dPhi); every
    equation has the transport term H_LL d_q^2.
    """
    if h_ll_mode not in H_LL_MODES:
        raise AsymptoticError(f"h_ll_mode must be one of {H_LL_MODES}")
    table: Dict[str, List[Tuple[float, str, str]]] = {p: [] for p in PAIR_NAMES}
    table["Phi"] = []
    for (J, K), c in quadratic_P_table().items():
        if impose_wavec and (J in WAVEC_PAIRS or K in WAVEC_PAIRS):
            continue
        table["LbLb"].append((-K_P * c, J, K))
    table["LbLb"].append((-K_PHI, "Phi", "Phi"))
    return CharSystem(PAIR_NAMES + ("Phi",), [], tuple(omega), "einstein", float(M), h_ll_mode,
                      table, impose_wavec, name=f"einstein[{h_ll_mode}]")


# -- profiles and integration -----------------------------------------------

@dataclass
class CharProfile:
    """State U_I(q) at slow time ell, with blow-up bookkeeping."""
    q: np.ndarray
    state: Dict[str, np.ndarray]
    ell: float = 0.0
    blowup: bool = False
    ell_star: Optional[float] = None
    ell_star_err: Optional[float] = None

    @property
    def dq(self) -> float:
        return float(self.q[1] - self.q[0])

    def phi(self, label: str) -> np.ndarray:
        """Phi(q) = 1/2 int_q^{q_max} U dq' by the trapezoid rule."""
        U = self.state[label]
        seg = 0.5 * (U[1:] + U[:-1]) * self.dq
        tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        return 0.5 * tail

    def sup(self, label: str) -> float:
        return float(np.max(np.abs(self.state[label])))

    def copy(self) -> "CharProfile":
        return CharProfile(self.q.copy(), {k: v.copy() for k, v in self.state.items()},
                           self.ell, self.blowup, self.ell_star, self.ell_star_err)


@dataclass
class CharHistory:
    ell: np.ndarray
    sups: Dict[str, np.ndarray]
    phi_sups: Dict[str, np.ndarray]
    final: CharProfile
    snapshots: List[CharProfile]
    s0: float = 1.0

    @property
    def blowup(self) -> bool:
        return self.final.blowup

    @property
    def ell_star(self) -> Optional[float]:
        return self.final.ell_star


def q_grid(q_max: float = 30.0, n: int = 601) -> np.ndarray:
    return np.linspace(-q_max, q_max, n)


def gaussian_seed(q: np.ndarray, eps: float, center: float = 0.0, width: float = 1.0) -> np.ndarray:
    """U = -2 dPhi/dq for a Gaussian Phi, scaled so that max U = eps."""
    x = (q - center) / width
    return eps * math.exp(0.5) * x * np.exp(-0.5 * x * x)


def _dq(f: np.ndarray, h: float) -> np.ndarray:
    """Centred second-order d/dq with zero values beyond the grid ends."""
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    out[0] = f[1] / (2.0 * h)
    out[-1] = -f[-2] / (2.0 * h)
    return out


def _phi_of(U: np.ndarray, h: float) -> np.ndarray:
    seg = 0.5 * (U[1:] + U[:-1]) * h
    return 0.5 * np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])


class _Rhs:
    """d_ell of the state dict, plus the transport speed in q for the CFL check."""

    def __init__(self, system: CharSystem, h: float):
        self.sys = system
        self.h = h
        if system.mode == "generic":
            self.terms = reduced_terms(system)

    def _factor(self, S, lab, order, cache):
        key = (lab, order)
        if key not in cache:
            if order == 0:
                cache[key] = _phi_of(S[lab], self.h)
            elif order == 1:
                cache[key] = S[lab]
            else:
                cache[key] = -2.0 * _dq(S[lab], self.h)
        return cache[key]

    def __call__(self, S: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        out = {k: np.zeros_like(v) for k, v in S.items()}
        if self.sys.mode == "generic":
            cache: Dict = {}
            for I, J, n, K, m, a in self.terms:
                out[I] += a * self._factor(S, J, n, cache) * self._factor(S, K, m, cache)
            return out
        sysm = self.sys
        tH = self.transport(S)
        for lab, U in S.items():
            if sysm.impose_wavec and lab in WAVEC_PAIRS:
                continue
            if np.any(tH != 0.0):
                out[lab] += tH * (-2.0) * _dq(U, self.h)
        for coef, J, K in sysm.table.get("LbLb", []):
            out["LbLb"] += coef * S[J] * S[K]
        return out

    def transport(self, S) -> np.ndarray:
        """t H_LL, the coefficient of d_- in every Einstein-mode equation."""
        mode = self.sys.h_ll_mode
        if mode == "zero":
            return np.zeros(1)
        if mode == "mass-profile":
            return np.full(1, self.sys.M)
        return -_phi_of(S["LL"], self.h)

    def speed(self, S) -> float:
        """Max |velocity| of q-transport terms."""
        if self.sys.mode == "einstein":
            return float(2.0 * np.max(np.abs(self.transport(S))))
        v = 0.0
        cache: Dict = {}
        for I, J, n, K, m, a in self.terms:
            if m == 2 and K == I:
                v = max(v, 2.0 * float(np.max(np.abs(a * self._factor(S, J, n, cache)))))
        return v


def integrate(system: CharSystem, data: CharProfile, s_max: float, s0: float = 1.0,
              blowup_threshold: Optional[float] = None, d_ell: float = 0.02,
              growth_step: float = 0.01, cfl: float = 1.0, n_snap: int = 20) -> CharHistory:
    """RK4 in ell = ln(s / s0) from ell = 0 up to ln(s_max / s0).

    The step is min(d_ell, growth_step / rate) with rate the largest relative
    growth of any component, so the integration resolves Riccati blow-up.
    It stops when sup|state| exceeds ``blowup_threshold`` (default 1e6 times
    the initial sup) and records ell* with the last step as uncertainty.
    """
    if s0 <= 0 or s_max <= s0:
        raise AsymptoticError("need 0 < s0 < s_max")
    ell_max = math.log(s_max / s0)
    h = data.dq
    rhs = _Rhs(system, h)
    S = {k: np.asarray(v, dtype=float).copy() for k, v in data.state.items()}
    for lab in system.unknowns:
        S.setdefault(lab, np.zeros_like(data.q))
    if system.mode == "einstein" and system.impose_wavec:
        for lab in WAVEC_PAIRS:
            S[lab] = np.zeros_like(data.q)
    sup0 = max(float(np.max(np.abs(v))) for v in S.values())
    thr = blowup_threshold if blowup_threshold is not None else 1e6 * sup0
    ell = 0.0
    ells = [0.0]
    sups = {k: [float(np.max(np.abs(v)))] for k, v in S.items()}
    phis = {k: [float(np.max(np.abs(_phi_of(v, h))))] for k, v in S.items()}
    snaps = [CharProfile(data.q.copy(), {k: v.copy() for k, v in S.items()}, 0.0)]
    snap_every = ell_max / max(n_snap, 1)
    next_snap = snap_every
    blow = False
    ell_star = err = None
    if sup0 == 0.0:
        thr = math.inf
    while ell < ell_max - 1e-14:
        k1 = rhs(S)
        rate = 0.0
        for lab, U in S.items():
            su = float(np.max(np.abs(U)))
            if su > 0:
                rate = max(rate, float(np.max(np.abs(k1[lab]))) / su)
        step = min(d_ell, ell_max - ell)
        if rate > 0:
            step = min(step, growth_step / rate)
        v = rhs.speed(S)
        if v * step > cfl * h:
            raise AsymptoticError(f"q-CFL violation: speed {v:.3g} with d_ell {step:.3g} and dq {h:.3g}")
        mid = lambda k, c: {lab: S[lab] + c * step * k[lab] for lab in S}
        k2 = rhs(mid(k1, 0.5))
        k3 = rhs(mid(k2, 0.5))
        k4 = rhs(mid(k3, 1.0))
        S = {lab: S[lab] + step / 6.0 * (k1[lab] + 2 * k2[lab] + 2 * k3[lab] + k4[lab]) for lab in S}
        if system.mode == "einstein" and system.impose_wavec:
            for lab in WAVEC_PAIRS:
                S[lab][:] = 0.0
        ell += step
        ells.append(ell)
        for lab, U in S.items():
            sups[lab].append(float(np.max(np.abs(U))))
            phis[lab].append(float(np.max(np.abs(_phi_of(U, h)))))
        cur = max(sups[lab][-1] for lab in S)
        if not math.isfinite(cur) or cur > thr:
            blow, ell_star, err = True, ell, step
            break
        if ell >= next_snap - 1e-12:
            snaps.append(CharProfile(data.q.copy(), {k: v.copy() for k, v in S.items()}, ell))
            next_snap += snap_every
    final = CharProfile(data.q.copy(), S, ell, blow, ell_star, err)
    return CharHistory(np.array(ells), {k: np.array(v) for k, v in sups.items()},
                       {k: np.array(v) for k, v in phis.items()}, final, snaps, s0)


# -- model systems ----------------------------------------------------------

def scalar_dt_squared() -> CharSystem:
    """box phi = (d_t phi)^2."""
    return CharSystem(("phi",), [Coupling("phi", "phi", (0,), "phi", (0,), 1.0)],
                      name="(d_t phi)^2")


def q0_system() -> CharSystem:
    """box phi = m^{ab} d_a phi d_b phi, the Q0 null form."""
    c = [Coupling("phi", "phi", (0,), "phi", (0,), -1.0)]
    c += [Coupling("phi", "phi", (i,), "phi", (i,), 1.0) for i in (1, 2, 3)]
    return CharSystem(("phi",), c, name="Q0")


def simple_system() -> CharSystem:
    """box phi1 = phi3 d_t^2 phi1 + (d_t phi2)^2, box phi2 = box phi3 = 0."""
    c = [Coupling("phi1", "phi3", (), "phi1", (0, 0), 1.0),
         Coupling("phi1", "phi2", (0,), "phi2", (0,), 1.0)]
    return CharSystem(("phi1", "phi2", "phi3"), c, name="simple weak-null")


def model_pair() -> CharSystem:
    """box phi2 = (d_t phi1)^2, box phi1 = 0."""
    return CharSystem(("phi1", "phi2"), [Coupling("phi2", "phi1", (0,), "phi1", (0,), 1.0)],
                      name="model pair")


def seed_profile(system: CharSystem, eps: float, q: np.ndarray,
                 zero: Sequence[str] = ()) -> CharProfile:
    """Gaussian-derived seeds of size eps for every unknown not listed in ``zero``.

    Seeds of different unknowns are offset in q so that cross terms are generic.
    """
    state = {}
    for k, lab in enumerate(system.unknowns):
        if lab in zero:
            state[lab] = np.zeros_like(q)
        else:
            state[lab] = gaussian_seed(q, eps, center=0.3 * k, width=1.0 + 0.1 * k)
    return CharProfile(q.copy(), state)


def einstein_seed(system: CharSystem, eps: float, q: np.ndarray) -> CharProfile:
    """Seeds for the free TU components and Phi; D_LbLb and the D_LT components start at 0."""
    zero = ("LbLb",) + (WAVEC_PAIRS if system.impose_wavec else ())
    return seed_profile(system, eps, q, zero)


# -- fits and classification ------------------------------------------------

def linear_fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    """(slope, intercept, R^2) of a least-squares line."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res ** 2)) / ss if ss > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def riccati_solution(u0: np.ndarray, a: float, ell: float) -> np.ndarray:
    """Exact solution of d_ell u = a u^2."""
    return u0 / (1.0 - a * u0 * ell)


def riccati_blowup(u0_max: float, a: float = 0.25) -> float:
    return 1.0 / (a * u0_max)


def sharp_decay_targets(history: CharHistory, bounded_tol: float = 0.02,
                        min_decades: float = 2.0) -> Dict[str, Dict[str, object]]:
    """Slope of sup|d_q D| in ell per component, normalised by the component's own sup.

    The normalisation makes the verdict independent of the seed amplitude, so
    a component fed by an O(eps^2) source is classified like an O(eps) one.
    Bounded slopes map to |d h| ~ t^-1, positive slopes to t^-1 ln t.
    """
    span = float(history.ell[-1] - history.ell[0])
    if span < min_decades * math.log(10.0) - 1e-12:
        raise AsymptoticError(f"history spans {span / math.log(10.0):.2f} decades in s, need {min_decades}")
    out: Dict[str, Dict[str, object]] = {}
    for lab, ys in history.sups.items():
        if np.all(ys == 0.0):
            out[lab] = {"slope": 0.0, "rel_slope": 0.0, "r2": 1.0, "class": "zero", "rate": "zero"}
            continue
        slope, icpt, r2 = linear_fit(history.ell, ys)
        rel = slope / float(np.max(ys))
        if abs(rel) <= bounded_tol:
            cls, rate = "bounded", "t^-1"
        elif rel > 0:
            cls, rate = "log-growth", "t^-1 ln t"
        else:
            cls, rate = "decaying", "faster than t^-1"
        out[lab] = {"slope": slope, "rel_slope": rel, "intercept": icpt, "r2": r2,
                    "class": cls, "rate": rate}
    return out


@dataclass
class Verdict:
    verdict: str
    table: List[Dict[str, float]] = field(default_factory=list)
    fit: Dict[str, float] = field(default_factory=dict)
    components: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {"verdict": self.verdict, "table": self.table, "fit": self.fit,
                "components": self.components}


def classify_weak_null(system: CharSystem, epsilon_grid: Sequence[float] = (0.02, 0.04, 0.06, 0.08, 0.1),
                       s_max: float = math.exp(300.0), q: Optional[np.ndarray] = None,
                       d_ell: float = 0.05) -> Verdict:
    """null-condition, weak-null-global or blow-up with the ell*(eps) table."""
    if satisfies_null_condition(system):
        return Verdict("null-condition")
    q = q_grid() if q is None else q
    rows = []
    comps: Dict[str, str] = {}
    for eps in epsilon_grid:
        hist = integrate(system, seed_profile(system, eps, q), s_max, d_ell=d_ell)
        row = {"epsilon": float(eps), "blowup": bool(hist.blowup),
               "ell_star": float(hist.ell_star) if hist.blowup else float("nan"),
               "ell_star_err": float(hist.final.ell_star_err) if hist.blowup else float("nan"),
               "ell_end": float(hist.ell[-1])}
        rows.append(row)
        if not hist.blowup and eps == max(epsilon_grid):
            for lab, ys in hist.sups.items():
                grow = (ys[-1] - ys[0]) / max(ys[0], 1e-300)
                comps[lab] = "log-growth" if grow > GROWTH_TOL else "bounded"
    if any(r["blowup"] for r in rows):
        bl = [r for r in rows if r["blowup"]]
        fit: Dict[str, float] = {}
        if len(bl) >= 2:
            x = np.array([1.0 / r["epsilon"] for r in bl])
            y = np.array([r["ell_star"] for r in bl])
            slope, icpt, r2 = linear_fit(x, y)
            fit = {"slope": slope, "intercept": icpt, "r2": r2}
        return Verdict("blow-up", rows, fit)
    return Verdict("weak-null-global", rows, {}, comps)


# -- system files ---------------------------------------------

def _parse_index(tok: str) -> Tuple[int, ...]:
    if tok == "-":
        return ()
    if not tok.isdigit():
        raise AsymptoticError(f"derivative index {tok!r} must be digits or '-'")
    return tuple(int(c) for c in tok)


def parse_system(text: str, source: str = "<string>") -> CharSystem:
    """Read a system file.

    Lines are ``key = value``; ``#`` starts a comment.  Keys: ``name``,
    ``unknowns`` (space separated), ``omega`` (three numbers), ``mode``
    (generic or einstein), ``M``, ``h_ll_mode`` and any number of
    ``couple = I J alpha K beta coef`` with alpha, beta digit strings of
    spacetime indices (``-`` for none).
    """
    fields: Dict[str, str] = {}
    couples: List[Tuple[int, str]] = []
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise AsymptoticError(f"{source}:{no}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "couple":
            couples.append((no, val))
        elif key in ("name", "unknowns", "omega", "mode", "M", "h_ll_mode"):
            fields[key] = val
        else:
            raise AsymptoticError(f"{source}:{no}: unknown key {key!r}")
    mode = fields.get("mode", "generic")
    omega = tuple(float(x) for x in fields.get("omega", "0 0 1").split())
    if len(omega) != 3:
        raise AsymptoticError(f"{source}: omega needs three numbers")
    if mode == "einstein":
        return build_einstein_system(float(fields.get("M", "0")), fields.get("h_ll_mode", "zero"),
                                     omega=omega)
    if "unknowns" not in fields:
        raise AsymptoticError(f"{source}: missing 'unknowns'")
    unknowns = tuple(fields["unknowns"].split())
    cs = []
    for no, val in couples:
        parts = val.split()
        if len(parts) != 6:
            raise AsymptoticError(f"{source}:{no}: couple needs 'I J alpha K beta coef'")
        try:
            cs.append(Coupling(parts[0], parts[1], _parse_index(parts[2]), parts[3],
                               _parse_index(parts[4]), float(parts[5])))
        except (AsymptoticError, ValueError) as exc:
            raise AsymptoticError(f"{source}:{no}: {exc}") from None
    try:
        return CharSystem(unknowns, cs, omega, name=fields.get("name", ""))
    except AsymptoticError as exc:
        raise AsymptoticError(f"{source}: {exc}") from None


def format_system(system: CharSystem) -> str:
    lines = [f"name = {system.name}"] if system.name else []
    lines.append(f"mode = {system.mode}")
    lines.append("omega = " + " ".join(repr(float(x)) for x in system.omega))
    if system.mode == "einstein":
        lines += [f"M = {system.M!r}", f"h_ll_mode = {system.h_ll_mode}"]
        return "\n".join(lines) + "\n"
    lines.append("unknowns = " + " ".join(system.unknowns))
    for c in system.couplings:
        a = "".join(map(str, c.alpha)) or "-"
        b = "".join(map(str, c.beta)) or "-"
        lines.append(f"couple = {c.target} {c.J} {a} {c.K} {b} {c.coef!r}")
    return "\n".join(lines) + "\n"
