"""Reeds-Shepp shortest paths for a car that may reverse.

Instances are normalised so the start sits at the origin with unit turning
radius. Nine base formulas are evaluated under time-flip (drive the word
backwards), reflection (swap left and right) and the backwards transform
(reverse segment order), which together produce every instance of the 48
admissible words.

Word tags spell each segment as a steering letter followed by its gear, e.g.
``"L+S+R+"`` or ``"L+R-L-"``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from .geometry import Pose2D, normalize_angle, wrap_angles

PI = math.pi
HALF_PI = 0.5 * math.pi
ZERO = 10 * np.finfo(float).eps
CLAMP_TOL = 1e-12
ZERO_LENGTH = 1e-10
# candidate endpoints that drift more than this (unit-radius space) are discarded
ENDPOINT_TOL = 1e-8


class Steer(Enum):
    LEFT = "L"
    STRAIGHT = "S"
    RIGHT = "R"

    @property
    def sign(self) -> int:
        return {"L": 1, "S": 0, "R": -1}[self.value]


class Gear(Enum):
    FORWARD = 1
    BACKWARD = -1

    @property
    def symbol(self) -> str:
        return "+" if self is Gear.FORWARD else "-"


def _family_words() -> tuple[str, ...]:
    base = [
        # C|C|C, C|CC, CC|C
        "L+R-L+", "R+L-R+", "L+R-L-", "R+L-R-", "L+R+L-", "R+L+R-",
        # CSC
        "L+S+L+", "L+S+R+", "R+S+L+", "R+S+R+",
        # CCu|CuC, C|CuCu|C
        "L+R+L-R-", "R+L+R-L-", "L+R-L-R+", "R+L-R-L+",
        # C|C(pi/2)SC, CSC(pi/2)|C
        "L+R-S-L-", "L+R-S-R-", "R+L-S-R-", "R+L-S-L-",
        "L+S+R+L-", "L+S+L+R-", "R+S+L+R-", "R+S+R+L-",
        # C|C(pi/2)SC(pi/2)|C
        "L+R-S-L-R+", "R+L-S-R-L+",
    ]
    flip = str.maketrans("+-", "-+")
    return tuple(base + [w.translate(flip) for w in base])


ADMISSIBLE_WORDS = frozenset(_family_words())
assert len(ADMISSIBLE_WORDS) == 48


@dataclass(frozen=True)
class RSSegment:
    steer: Steer
    gear: Gear
    length: float  # metres of travel, >= 0

    @property
    def signed_length(self) -> float:
        return self.gear.value * self.length


@dataclass(frozen=True)
class RSPath:
    segments: tuple[RSSegment, ...]
    word: str

    @property
    def total_length(self) -> float:
        return sum(s.length for s in self.segments)

    @property
    def gear_shifts(self) -> int:
        gears = [s.gear for s in self.segments if s.length > ZERO_LENGTH]
        return sum(1 for a, b in zip(gears, gears[1:]) if a is not b)

    def triples(self) -> list[tuple[str, str, float]]:
        """``(steer, gear, length)`` triples as written into episode logs."""
        return [(s.steer.name, s.gear.name, s.length) for s in self.segments]

    def end_pose(self, start: Pose2D, r_min: float) -> Pose2D:
        x, y, th = start.x, start.y, start.theta
        for seg in self.segments:
            x, y, th = _advance(x, y, th, seg.steer.sign / r_min, seg.signed_length)
        return Pose2D(x, y, th)

    def scaled(self, k: float) -> "RSPath":
        return RSPath(tuple(RSSegment(s.steer, s.gear, s.length * k) for s in self.segments),
                      self.word)


def _advance(x, y, th, kappa, ds):
    """Exact constant-curvature motion by signed arc length ``ds``."""
    if kappa == 0.0:
        return x + ds * math.cos(th), y + ds * math.sin(th), th
    th2 = th + kappa * ds
    return (x + (math.sin(th2) - math.sin(th)) / kappa,
            y + (math.cos(th) - math.cos(th2)) / kappa,
            th2)


# --- base formulas (unit radius, start at origin) ---------------------------

def _mod2pi(a: float) -> float:
    v = math.fmod(a, 2 * PI)
    if v < -PI:
        v += 2 * PI
    elif v > PI:
        v -= 2 * PI
    return v


def _polar(x, y):
    return math.hypot(x, y), math.atan2(y, x)


def _clamped(v: float, lo: float, hi: float):
    """Clamp ``v`` into [lo, hi] when it overshoots by at most CLAMP_TOL, else None."""
    if v < lo - CLAMP_TOL or v > hi + CLAMP_TOL:
        return None
    return min(max(v, lo), hi)


def _tau_omega(u, v, xi, eta, phi):
    delta = _mod2pi(u - v)
    a = math.sin(u) - math.sin(delta)
    b = math.cos(u) - math.cos(delta) - 1.0
    t1 = math.atan2(eta * a - xi * b, xi * a + eta * b)
    t2 = 2.0 * (math.cos(delta) - math.cos(v) - math.cos(u)) + 3.0
    tau = _mod2pi(t1 + PI) if t2 < 0 else _mod2pi(t1)
    omega = _mod2pi(tau - u + v - phi)
    return tau, omega


def _lp_sp_lp(x, y, phi):
    u, t = _polar(x - math.sin(phi), y - 1.0 + math.cos(phi))
    if t >= -ZERO:
        v = _mod2pi(phi - t)
        if v >= -ZERO:
            return t, u, v
    return None


def _lp_sp_rp(x, y, phi):
    u1, t1 = _polar(x + math.sin(phi), y - 1.0 - math.cos(phi))
    u1 = u1 * u1
    d = _clamped(u1 - 4.0, 0.0, math.inf)
    if d is None:
        return None
    u = math.sqrt(d)
    theta = math.atan2(2.0, u)
    t = _mod2pi(t1 + theta)
    v = _mod2pi(t - phi)
    if t >= -ZERO and v >= -ZERO:
        return t, u, v
    return None


def _lp_rm_l(x, y, phi):
    xi, eta = x - math.sin(phi), y - 1.0 + math.cos(phi)
    u1, theta = _polar(xi, eta)
    arg = _clamped(0.25 * u1, -1.0, 1.0)
    if arg is None:
        return None
    u = -2.0 * math.asin(arg)
    t = _mod2pi(theta + 0.5 * u + PI)
    v = _mod2pi(phi - t + u)
    if t >= -ZERO and u <= ZERO:
        return t, u, v
    return None


def _lp_rup_lum_rm(x, y, phi):
    xi, eta = x + math.sin(phi), y - 1.0 - math.cos(phi)
    rho = _clamped(0.25 * (2.0 + math.hypot(xi, eta)), -1.0, 1.0)
    if rho is None:
        return None
    u = math.acos(rho)
    t, v = _tau_omega(u, -u, xi, eta, phi)
    if t >= -ZERO and v <= ZERO:
        return t, u, v
    return None


def _lp_rum_lum_rp(x, y, phi):
    xi, eta = x + math.sin(phi), y - 1.0 - math.cos(phi)
    rho = _clamped((20.0 - xi * xi - eta * eta) / 16.0, 0.0, 1.0)
    if rho is None:
        return None
    u = -math.acos(rho)
    if u >= -HALF_PI:
        t, v = _tau_omega(u, u, xi, eta, phi)
        if t >= -ZERO and v >= -ZERO:
            return t, u, v
    return None


def _lp_rm_sm_lm(x, y, phi):
    xi, eta = x - math.sin(phi), y - 1.0 + math.cos(phi)
    rho, theta = _polar(xi, eta)
    d = _clamped(rho * rho - 4.0, 0.0, math.inf)
    if d is None:
        return None
    r = math.sqrt(d)
    u = 2.0 - r
    t = _mod2pi(theta + math.atan2(r, -2.0))
    v = _mod2pi(phi - HALF_PI - t)
    if t >= -ZERO and u <= ZERO and v <= ZERO:
        return t, u, v
    return None


def _lp_rm_sm_rm(x, y, phi):
    xi, eta = x + math.sin(phi), y - 1.0 - math.cos(phi)
    rho, theta = _polar(-eta, xi)
    if _clamped(rho, 2.0, math.inf) is None:
        return None
    t = theta
    u = 2.0 - max(rho, 2.0)
    v = _mod2pi(t + HALF_PI - phi)
    if t >= -ZERO and u <= ZERO and v <= ZERO:
        return t, u, v
    return None


def _lp_rm_s_lm_rp(x, y, phi):
    xi, eta = x + math.sin(phi), y - 1.0 - math.cos(phi)
    rho, theta = _polar(xi, eta)
    d = _clamped(rho * rho - 4.0, 0.0, math.inf)
    if d is None:
        return None
    u = 4.0 - math.sqrt(d)
    if u <= ZERO:
        t = _mod2pi(math.atan2((4.0 - u) * xi - 2.0 * eta, -2.0 * xi + (u - 4.0) * eta))
        v = _mod2pi(t - phi)
        if t >= -ZERO and v >= -ZERO:
            return t, u, v
    return None


# --- candidate assembly -----------------------------------------------------

def _swap_lr(letters: str) -> str:
    return letters.translate(str.maketrans("LR", "RL"))


def _make(letters: str, signs: str, lengths) -> RSPath:
    """Build a unit-radius path. ``signs`` holds the nominal gear per segment,
    '?' where the formula leaves the sign free; it is used only for
    zero-length segments."""
    segs = []
    word = []
    for letter, nominal, length in zip(letters, signs, lengths):
        if abs(length) <= ZERO_LENGTH:
            sym = "+" if nominal == "?" else nominal
            length = 0.0
        else:
            sym = "+" if length > 0 else "-"
        gear = Gear.FORWARD if sym == "+" else Gear.BACKWARD
        segs.append(RSSegment(Steer(letter), gear, abs(length)))
        word.append(letter + sym)
    return RSPath(tuple(segs), "".join(word))


def _flip_signs(signs: str) -> str:
    return signs.translate(str.maketrans("+-", "-+"))


def _four_ways(out, formula, x, y, phi, letters, signs, arrange):
    """Evaluate a formula plainly, time-flipped, reflected and both."""
    variants = (
        (x, y, phi, letters, signs, 1.0),
        (-x, y, -phi, letters, _flip_signs(signs), -1.0),
        (x, -y, -phi, _swap_lr(letters), signs, 1.0),
        (-x, -y, phi, _swap_lr(letters), _flip_signs(signs), -1.0),
    )
    for vx, vy, vphi, let, sg, k in variants:
        r = formula(vx, vy, vphi)
        if r is not None:
            out.append(_make(let, sg, [k * l for l in arrange(*r)]))


def _candidates_unit(x: float, y: float, phi: float) -> list[RSPath]:
    out: list[RSPath] = []
    # backwards transform: goal-relative coordinates with the segment order reversed
    xb = x * math.cos(phi) + y * math.sin(phi)
    yb = x * math.sin(phi) - y * math.cos(phi)

    _four_ways(out, _lp_sp_lp, x, y, phi, "LSL", "+++", lambda t, u, v: (t, u, v))
    _four_ways(out, _lp_sp_rp, x, y, phi, "LSR", "+++", lambda t, u, v: (t, u, v))

    _four_ways(out, _lp_rm_l, x, y, phi, "LRL", "+-?", lambda t, u, v: (t, u, v))
    _four_ways(out, _lp_rm_l, xb, yb, phi, "LRL", "?-+", lambda t, u, v: (v, u, t))

    _four_ways(out, _lp_rup_lum_rm, x, y, phi, "LRLR", "++--",
               lambda t, u, v: (t, u, -u, v))
    _four_ways(out, _lp_rum_lum_rp, x, y, phi, "LRLR", "+--+",
               lambda t, u, v: (t, u, u, v))

    _four_ways(out, _lp_rm_sm_lm, x, y, phi, "LRSL", "+---",
               lambda t, u, v: (t, -HALF_PI, u, v))
    _four_ways(out, _lp_rm_sm_rm, x, y, phi, "LRSR", "+---",
               lambda t, u, v: (t, -HALF_PI, u, v))
    _four_ways(out, _lp_rm_sm_lm, xb, yb, phi, "LSRL", "---+",
               lambda t, u, v: (v, u, -HALF_PI, t))
    _four_ways(out, _lp_rm_sm_rm, xb, yb, phi, "RSRL", "---+",
               lambda t, u, v: (v, u, -HALF_PI, t))

    _four_ways(out, _lp_rm_s_lm_rp, x, y, phi, "LRSLR", "+---+",
               lambda t, u, v: (t, -HALF_PI, u, -HALF_PI, v))
    return out


def _canonical(start: Pose2D, goal: Pose2D, r_min: float):
    dx, dy = goal.x - start.x, goal.y - start.y
    c, s = math.cos(start.theta), math.sin(start.theta)
    return ((c * dx + s * dy) / r_min, (-s * dx + c * dy) / r_min,
            normalize_angle(goal.theta - start.theta))


def enumerate_all(start: Pose2D, goal: Pose2D, r_min: float) -> list[RSPath]:
    """Every feasible word instance joining ``start`` to ``goal``, in metres.

    Duplicates (same word and lengths) are removed; order follows formula
    evaluation order.
    """
    if not r_min > 0:
        raise ValueError("r_min must be positive")
    x, y, phi = _canonical(start, goal, r_min)
    unit_goal = Pose2D(x, y, phi)
    origin = Pose2D(0.0, 0.0, 0.0)
    seen = set()
    paths = []
    for p in _candidates_unit(x, y, phi):
        if p.word not in ADMISSIBLE_WORDS:  # pragma: no cover - internal consistency
            raise AssertionError(f"formula produced inadmissible word {p.word}")
        end = p.end_pose(origin, 1.0)
        if (math.hypot(end.x - x, end.y - y) > ENDPOINT_TOL
                or abs(normalize_angle(end.theta - unit_goal.theta)) > ENDPOINT_TOL):
            continue
        key = (p.word, tuple(round(s.length, 12) for s in p.segments))
        if key in seen:
            continue
        seen.add(key)
        paths.append(p.scaled(r_min))
    return paths


def _choose(paths: Iterable[RSPath]) -> RSPath:
    paths = list(paths)
    best = min(p.total_length for p in paths)
    tol = 1e-12 * max(1.0, best)
    tied = [p for p in paths if p.total_length <= best + tol]
    return min(tied, key=lambda p: (p.gear_shifts, p.word))


def sort_by_preference(paths: Iterable[RSPath]) -> list[RSPath]:
    """Shortest first; equal lengths ordered by fewer gear shifts, then word."""
    return sorted(paths, key=lambda p: (round(p.total_length, 9), p.gear_shifts, p.word))


def solve(start: Pose2D, goal: Pose2D, r_min: float) -> RSPath:
    """Shortest Reeds-Shepp path from ``start`` to ``goal``."""
    return _choose(enumerate_all(start, goal, r_min))


def path_length(start: Pose2D, goal: Pose2D, r_min: float) -> float:
    return solve(start, goal, r_min).total_length


def sample_array(path: RSPath, start: Pose2D, r_min: float, ds: float) -> np.ndarray:
    """Poses (N, 3) along the path, spaced at most ``ds`` apart in arc length."""
    if not ds > 0:
        raise ValueError("ds must be positive")
    chunks = [np.array([[start.x, start.y, start.theta]])]
    x, y, th = start.x, start.y, start.theta
    for seg in path.segments:
        if seg.length <= 0.0:
            continue
        n = max(1, math.ceil(seg.length / ds - 1e-9))
        s = seg.gear.value * seg.length * np.arange(1, n + 1) / n
        kappa = seg.steer.sign / r_min
        if kappa == 0.0:
            xs = x + s * math.cos(th)
            ys = y + s * math.sin(th)
            ths = np.full(n, th)
        else:
            ths = th + kappa * s
            xs = x + (np.sin(ths) - math.sin(th)) / kappa
            ys = y + (math.cos(th) - np.cos(ths)) / kappa
        chunks.append(np.column_stack([xs, ys, ths]))
        x, y, th = _advance(x, y, th, kappa, seg.signed_length)
    out = np.concatenate(chunks, axis=0)
    out[:, 2] = wrap_angles(out[:, 2])
    return out


def sample(path: RSPath, start: Pose2D, r_min: float, ds: float) -> list[Pose2D]:
    return [Pose2D(x, y, th) for x, y, th in sample_array(path, start, r_min, ds)]


# --- length-only evaluation for search heuristics ---------------------------

_LENGTH_FAMILIES = (
    (_lp_sp_lp, False, lambda t, u, v: abs(t) + abs(u) + abs(v)),
    (_lp_sp_rp, False, lambda t, u, v: abs(t) + abs(u) + abs(v)),
    (_lp_rm_l, False, lambda t, u, v: abs(t) + abs(u) + abs(v)),
    (_lp_rm_l, True, lambda t, u, v: abs(t) + abs(u) + abs(v)),
    (_lp_rup_lum_rm, False, lambda t, u, v: abs(t) + 2 * abs(u) + abs(v)),
    (_lp_rum_lum_rp, False, lambda t, u, v: abs(t) + 2 * abs(u) + abs(v)),
    (_lp_rm_sm_lm, False, lambda t, u, v: abs(t) + HALF_PI + abs(u) + abs(v)),
    (_lp_rm_sm_rm, False, lambda t, u, v: abs(t) + HALF_PI + abs(u) + abs(v)),
    (_lp_rm_sm_lm, True, lambda t, u, v: abs(t) + HALF_PI + abs(u) + abs(v)),
    (_lp_rm_sm_rm, True, lambda t, u, v: abs(t) + HALF_PI + abs(u) + abs(v)),
    (_lp_rm_s_lm_rp, False, lambda t, u, v: abs(t) + PI + abs(u) + abs(v)),
)


def shortest_length_unit(x: float, y: float, phi: float) -> float:
    """Optimal unit-radius length to (x, y, phi) from the origin, without building paths."""
    cphi, sphi = math.cos(phi), math.sin(phi)
    xb = x * cphi + y * sphi
    yb = x * sphi - y * cphi
    best = math.inf
    for formula, backwards, length in _LENGTH_FAMILIES:
        bx, by = (xb, yb) if backwards else (x, y)
        for vx, vy, vphi in ((bx, by, phi), (-bx, by, -phi), (bx, -by, -phi), (-bx, -by, phi)):
            r = formula(vx, vy, vphi)
            if r is not None:
                L = length(*r)
                if L < best:
                    best = L
    return best


def shortest_length(start: Pose2D, goal: Pose2D, r_min: float) -> float:
    x, y, phi = _canonical(start, goal, r_min)
    return shortest_length_unit(x, y, phi) * r_min
