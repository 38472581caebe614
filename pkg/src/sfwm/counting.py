"""Pulsed photon-counting simulation of a multimode pair source, and the count estimators.

Per pulse and per Schmidt mode m the pair number is Bose-Einstein with mean
mu_m.  Every photon (pairs and Raman background) survives its path and
detector independently, split arms route each photon with probability 1/2,
and threshold detectors also fire on dark events.

The sampler is sparse: it only draws the pulses that carry at least one event,
which is exact because the per-pulse sources are independent.  Blocks of
pulses use independent PCG64 streams keyed by (seed, block index), so results
depend only on (seed, block_size).
"""
from __future__ import annotations

import enum
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

DEFAULT_BLOCK = 1 << 20
_LABEL_ORDER = ("i1", "i2", "s", "s1", "s2", "i")


class UndefinedEstimatorError(ZeroDivisionError):
    pass


class CalibrationError(RuntimeError):
    pass


class Topology(enum.Enum):
    CROSS = "cross_correlation"
    IDLER_AUTO = "idler_autocorrelation"
    SIGNAL_AUTO = "signal_autocorrelation"
    HERALDED = "heralded_g2"

    @property
    def detectors(self) -> tuple[str, ...]:
        return _DETECTORS[self]


_DETECTORS = {
    Topology.CROSS: ("s", "i"),
    Topology.IDLER_AUTO: ("i1", "i2"),
    Topology.SIGNAL_AUTO: ("s1", "s2"),
    Topology.HERALDED: ("s", "i1", "i2"),
}

# (arm, fraction of that arm's photons routed to the detector); 50:50 splitters
_ROUTING = {"s": ("s", 1.0), "i": ("i", 1.0), "s1": ("s", 0.5), "s2": ("s", 0.5),
            "i1": ("i", 0.5), "i2": ("i", 0.5)}


def label(names) -> str:
    return "".join(sorted(names, key=_LABEL_ORDER.index))


def _patterns(topology: Topology):
    dets = topology.detectors
    for r in range(1, len(dets) + 1):
        for combo in itertools.combinations(dets, r):
            yield combo


@dataclass(frozen=True)
class DetectorModel:
    eta_signal_path: float = 0.8
    eta_idler_path: float = 0.8
    eta_detector: float = 0.5
    dark_probability: float = 6.25e-6

    def __post_init__(self):
        for name in ("eta_signal_path", "eta_idler_path", "eta_detector", "dark_probability"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def eta_signal(self) -> float:
        return self.eta_signal_path * self.eta_detector

    @property
    def eta_idler(self) -> float:
        return self.eta_idler_path * self.eta_detector

    def arm_efficiency(self, arm: str) -> float:
        return self.eta_signal if arm == "s" else self.eta_idler


@dataclass(frozen=True)
class NoiseModel:
    """Mean Raman photons per pulse in each arm (independent Poisson)."""

    raman_signal: float = 0.0
    raman_idler: float = 0.0

    def __post_init__(self):
        if self.raman_signal < 0 or self.raman_idler < 0:
            raise ValueError("Raman means must be non-negative")

    def arm_mean(self, arm: str) -> float:
        return self.raman_signal if arm == "s" else self.raman_idler


@dataclass(frozen=True)
class SqueezingGain:
    """Per-Schmidt-mode mean pair numbers."""

    mode_means: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mode_means, dtype=float).ravel()
        if (m < 0).any():
            raise ValueError("mode means must be non-negative")
        object.__setattr__(self, "mode_means", m)

    @classmethod
    def from_schmidt(cls, coefficients, mean_pairs: float) -> "SqueezingGain":
        c2 = np.asarray(coefficients, dtype=float)**2
        return cls(mean_pairs * c2 / c2.sum())

    @classmethod
    def single_mode(cls, mean_pairs: float) -> "SqueezingGain":
        return cls(np.array([mean_pairs]))

    @classmethod
    def equal_modes(cls, mean_pairs: float, modes: int) -> "SqueezingGain":
        return cls(np.full(modes, mean_pairs / modes))

    @property
    def mean_pairs(self) -> float:
        return float(self.mode_means.sum())

    @property
    def purity(self) -> float:
        w = self.mode_means / self.mode_means.sum()
        return float(np.sum(w**2))


@dataclass
class CountingRecord:
    topology: Topology
    n_pulses: int
    counts: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def n(self, *names) -> int:
        return int(self.counts[label(names)])

    def __add__(self, other: "CountingRecord") -> "CountingRecord":
        if other.topology is not self.topology:
            raise ValueError("cannot merge records of different topologies")
        merged = {k: self.counts.get(k, 0) + other.counts.get(k, 0)
                  for k in set(self.counts) | set(other.counts)}
        return CountingRecord(self.topology, self.n_pulses + other.n_pulses, merged, self.config)

    def to_dict(self) -> dict:
        return {"topology": self.topology.value, "n_pulses": self.n_pulses,
                "counts": {f"N_{k}": int(v) for k, v in sorted(self.counts.items())},
                "config": self.config}


def _sparse_bernoulli(rng, n: int, p: float) -> np.ndarray:
    """Sorted indices of the pulses in which an event of probability ``p`` occurs."""
    if p <= 0:
        return np.empty(0, np.int64)
    k = rng.binomial(n, min(p, 1.0))
    if k == 0:
        return np.empty(0, np.int64)
    return np.sort(rng.choice(n, size=k, replace=False, shuffle=False))


def _pair_numbers(rng, gain: SqueezingGain, n: int):
    """(pulse indices, total pair numbers) for pulses with at least one pair."""
    idx, cnt = [], []
    for mu in gain.mode_means:
        if mu <= 0:
            continue
        q = mu / (1.0 + mu)
        hit = _sparse_bernoulli(rng, n, q)
        if hit.size:
            idx.append(hit)
            # Bose-Einstein conditioned on n >= 1 is 1 + Bose-Einstein
            cnt.append(rng.geometric(1.0 - q, size=hit.size))
    if not idx:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    pulses, inv = np.unique(np.concatenate(idx), return_inverse=True)
    return pulses, np.bincount(inv, weights=np.concatenate(cnt)).astype(np.int64)


def _click_sets(gain, det, noise, topology, rng, n: int) -> dict:
    pulses, pairs = _pair_numbers(rng, gain, n)
    detectors = topology.detectors
    arms = sorted({_ROUTING[d][0] for d in detectors}, key="si".index)
    photons = {}
    for arm in arms:
        surv = rng.binomial(pairs, det.arm_efficiency(arm))
        split = [d for d in detectors if _ROUTING[d][0] == arm]
        if len(split) == 1:
            photons[split[0]] = surv
        else:
            first = rng.binomial(surv, 0.5)
            photons[split[0]], photons[split[1]] = first, surv - first
    clicks = {}
    for d in detectors:
        arm, frac = _ROUTING[d]
        from_pairs = pulses[photons[d] > 0]
        raman_mean = noise.arm_mean(arm) * det.arm_efficiency(arm) * frac
        raman = _sparse_bernoulli(rng, n, -np.expm1(-raman_mean))
        dark = _sparse_bernoulli(rng, n, det.dark_probability)
        clicks[d] = np.union1d(np.union1d(from_pairs, raman), dark)
    return clicks


def sample_pulses(gain: SqueezingGain, det: DetectorModel, noise: NoiseModel,
                  topology: Topology, rng: np.random.Generator, n_pulses: int = 1) -> dict:
    """Click pattern of ``n_pulses`` pulses: detector name -> boolean array."""
    sets = _click_sets(gain, det, noise, topology, rng, n_pulses)
    out = {}
    for d, idx in sets.items():
        a = np.zeros(n_pulses, dtype=bool)
        a[idx] = True
        out[d] = a
    return out


def _tally(clicks: dict, topology: Topology) -> dict:
    counts = {}
    for combo in _patterns(topology):
        s = clicks[combo[0]]
        for d in combo[1:]:
            s = np.intersect1d(s, clicks[d], assume_unique=True)
        counts[label(combo)] = int(s.size)
    return counts


def block_rng(seed: int, block: int, stream: tuple = ()) -> np.random.Generator:
    key = tuple(stream) + (block,)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def run_experiment(gain: SqueezingGain, det: DetectorModel, noise: NoiseModel,
                   topology: Topology, n_pulses: int, seed: int,
                   block_size: int = DEFAULT_BLOCK, workers: int = 1,
                   stream: tuple = ()) -> CountingRecord:
    """Simulate ``n_pulses`` pulses and tally every single and coincidence pattern.

    ``stream`` is prepended to the block index in the seed's spawn key so
    callers can run several independent experiments from one seed.
    """
    if n_pulses < 1:
        raise ValueError("need at least one pulse")
    n_blocks = -(-n_pulses // block_size)
    sizes = [block_size] * (n_blocks - 1) + [n_pulses - block_size * (n_blocks - 1)]

    def one(b):
        return _tally(_click_sets(gain, det, noise, topology, block_rng(seed, b, stream), sizes[b]),
                      topology)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, range(n_blocks)))
    else:
        parts = [one(b) for b in range(n_blocks)]
    counts = {k: sum(p[k] for p in parts) for k in parts[0]}
    cfg = {"seed": seed, "stream": list(stream), "block_size": block_size,
           "mode_means": gain.mode_means.tolist(), "detector": asdict(det),
           "noise": asdict(noise)}
    return CountingRecord(topology, n_pulses, counts, cfg)


class Estimate(NamedTuple):
    value: float
    stderr: float


def g2_pulsed(record: CountingRecord, x: str, y: str) -> Estimate:
    """N_xy N_p / (N_x N_y) with Poisson-propagated standard error."""
    nx, ny, nxy = record.n(x), record.n(y), record.n(x, y)
    if nx == 0 or ny == 0:
        raise UndefinedEstimatorError(f"no singles on {x if nx == 0 else y}")
    scale = record.n_pulses / (nx * ny)
    var = scale**2 * (max(nxy, 1) + nxy**2 * (1 / nx + 1 / ny))
    return Estimate(nxy * scale, float(np.sqrt(var)))


def heralded_g2(record: CountingRecord) -> Estimate:
    """N_i1i2s N_s / (N_i1s N_i2s) with Poisson-propagated standard error."""
    if record.topology is not Topology.HERALDED:
        raise ValueError("heralded g2 needs the heralded_g2 topology")
    ns, n1, n2, n12 = (record.n("s"), record.n("i1", "s"), record.n("i2", "s"),
                       record.n("i1", "i2", "s"))
    if n1 == 0 or n2 == 0:
        raise UndefinedEstimatorError("no heralded coincidences in one idler arm")
    scale = ns / (n1 * n2)
    var = scale**2 * (max(n12, 1) + n12**2 * (1 / ns + 1 / n1 + 1 / n2))
    return Estimate(n12 * scale, float(np.sqrt(var)))


def heralding_efficiency(record: CountingRecord) -> Estimate:
    """N_si / N_s; in the heralded topology an idler click on either arm counts."""
    ns = record.n("s")
    if ns == 0:
        raise UndefinedEstimatorError("no herald clicks")
    if record.topology is Topology.CROSS:
        nsi = record.n("s", "i")
    elif record.topology is Topology.HERALDED:
        nsi = record.n("i1", "s") + record.n("i2", "s") - record.n("i1", "i2", "s")
    else:
        raise ValueError(f"no herald in topology {record.topology.value}")
    eta = nsi / ns
    return Estimate(eta, float(np.sqrt(eta * (1 - eta) / ns)))


class Preparation(NamedTuple):
    value: float
    consistent: bool


def preparation_efficiency(eta_h: float, eta_detector: float) -> Preparation:
    """eta_H / eta_det; ``consistent`` is False when that exceeds one."""
    if not 0 < eta_detector <= 1:
        raise ValueError("detector efficiency must lie in (0, 1]")
    value = eta_h / eta_detector
    return Preparation(value, value <= 1.0)


# -- closed-form click statistics ------------------------------------------------

def _log_no_click(gain, det, noise, detectors) -> float:
    f = {"s": 0.0, "i": 0.0}
    for d in detectors:
        arm, frac = _ROUTING[d]
        f[arm] += frac
    ys = det.eta_signal * f["s"]
    yi = det.eta_idler * f["i"]
    # 1 - x_s x_i with x = 1 - y, written to avoid cancellation
    pairs = -np.sum(np.log1p(gain.mode_means * (ys + yi - ys * yi)))
    raman = -noise.raman_signal * ys - noise.raman_idler * yi
    return float(pairs + raman + len(detectors) * np.log1p(-det.dark_probability))


def click_probabilities(gain: SqueezingGain, det: DetectorModel, noise: NoiseModel,
                        topology: Topology) -> dict:
    """Exact per-pulse probability of every click pattern the topology tallies.

    Uses the Bose-Einstein generating function 1/(1 + mu (1 - x)) per mode and
    inclusion-exclusion over no-click probabilities.  The alternating sum of
    ones vanishes, so summing expm1 of the log no-click probabilities keeps
    full relative precision at low gain.
    """
    out = {}
    for combo in _patterns(topology):
        p = 0.0
        for r in range(1, len(combo) + 1):
            for sub in itertools.combinations(combo, r):
                p += (-1)**r * np.expm1(_log_no_click(gain, det, noise, sub))
        out[label(combo)] = float(p)
    return out


def expected_g2(gain, det, noise, topology: Topology, x: str | None = None,
                y: str | None = None) -> float:
    """Large-N_p limit of g2_pulsed (or heralded_g2 for the heralded topology)."""
    p = click_probabilities(gain, det, noise, topology)
    if topology is Topology.HERALDED and x is None:
        return p["i1i2s"] * p["s"] / (p["i1s"] * p["i2s"])
    x, y = (x, y) if x is not None else topology.detectors[:2]
    return p[label((x, y))] / (p[x] * p[y])


def expected_heralding_efficiency(gain, det, noise) -> float:
    p = click_probabilities(gain, det, noise, Topology.CROSS)
    return p["si"] / p["s"]


@dataclass(frozen=True)
class PowerModel:
    """Pump-power knob: mu = mu_ref (P / P_ref)^2, Raman means linear in P (mW)."""

    mu_ref: float
    power_ref_mw: float = 100.0
    raman_signal_per_mw: float = 0.0
    raman_idler_per_mw: float = 0.0

    def mean_pairs(self, power_mw: float) -> float:
        return self.mu_ref * (power_mw / self.power_ref_mw)**2

    def noise(self, power_mw: float) -> NoiseModel:
        return NoiseModel(self.raman_signal_per_mw * power_mw, self.raman_idler_per_mw * power_mw)

    def gain(self, coefficients, power_mw: float) -> SqueezingGain:
        return SqueezingGain.from_schmidt(coefficients, self.mean_pairs(power_mw))


def calibrate_power_model(coefficients, det: DetectorModel, *, g2_si: float = 73.5,
                          g2_si_power_mw: float = 100.0, g2_h: float = 0.0092,
                          g2_h_power_mw: float = 25.0, power_ref_mw: float = 100.0,
                          signal_to_idler_raman: float = 0.0) -> PowerModel:
    """Fit mu_ref and the idler Raman slope to a cross-correlation and a heralded-g2 target.

    Both targets are matched with the closed-form click statistics.  The signal
    Raman slope is held at ``signal_to_idler_raman`` times the idler slope.
    For a given Raman slope, mu_ref is taken on the pair-dominated branch (above
    the maximum of g2_si in mu); the slope is then bracketed and solved for the
    heralded-g2 target.
    """
    def model(mu_ref, rho):
        return PowerModel(mu_ref, power_ref_mw, signal_to_idler_raman * rho, rho)

    def log_g2_si(log_mu, rho):
        pm = model(np.exp(log_mu), rho)
        return np.log(expected_g2(pm.gain(coefficients, g2_si_power_mw), det,
                                  pm.noise(g2_si_power_mw), Topology.CROSS))

    def mu_for(rho):
        peak = minimize_scalar(lambda v: -log_g2_si(v, rho), bounds=(np.log(1e-12), 0.0),
                               method="bounded", options={"xatol": 1e-10})
        top = peak.x
        if log_g2_si(top, rho) <= np.log(g2_si):
            return None
        hi = np.log(10.0)
        if log_g2_si(hi, rho) >= np.log(g2_si):
            return None
        return np.exp(brentq(lambda v: log_g2_si(v, rho) - np.log(g2_si), top, hi, xtol=1e-14))

    def excess(rho):
        mu = mu_for(rho)
        if mu is None:
            return None
        pm = model(mu, rho)
        return np.log(expected_g2(pm.gain(coefficients, g2_h_power_mw), det,
                                  pm.noise(g2_h_power_mw), Topology.HERALDED) / g2_h)

    f0 = excess(0.0)
    if f0 is None or f0 > 0:
        raise CalibrationError("targets unreachable: noise-free source already misses them")
    lo, hi = 0.0, 1.0 / (g2_si * g2_si_power_mw)
    f_hi = excess(hi)
    for _ in range(200):
        if f_hi is not None and f_hi > 0:
            break
        if f_hi is None:
            hi = 0.5 * (lo + hi)
        else:
            lo, hi = hi, 2 * hi
        f_hi = excess(hi)
    else:
        raise CalibrationError("could not bracket the Raman slope for the heralded-g2 target")

    def signed(r):
        v = excess(r)
        return 1.0 if v is None else v

    rho = brentq(signed, lo, hi, xtol=1e-16, rtol=1e-13)
    return model(mu_for(rho), rho)
