"""Command-line front end: figure-level experiments as plot-ready CSV plus a JSON report.

Every command writes ``<out>/<command>.csv`` and ``<out>/<command>.report.json``.
Exit codes: 0 success (row-level failures are listed in the report), 2 bad
configuration, 3 numerical failure of the whole command.
"""
from __future__ import annotations

import argparse
import copy
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import counting as ct
from . import io
from .config import ConfigError
from .dispersion import DispersionRangeError
from .jsa import (
    GridCoverageError,
    ZeroTransmissionError,
    apply_filter,
    build_jsa,
    build_jsa_covered,
    central_lobe_correlation,
    coverage,
    fwhm_tracks,
    marginal_spectrum,
)
from .phasematch import (
    LinearGradient,
    NoPhasematchError,
    QuadratureError,
    RandomSegments,
    solve_phasematch,
)
from .schmidt import (
    SchmidtError,
    cauchy_schwarz_violation,
    decompose,
    predicted_autocorrelation,
    schmidt_coefficients,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

BAND = (0.82, 0.90)

NUMERICAL_ERRORS = (NoPhasematchError, QuadratureError, SchmidtError, ct.CalibrationError,
                    ZeroTransmissionError, FloatingPointError, np.linalg.LinAlgError)


def _map(fn, items, workers: int):
    """Ordered map, fanned out to a thread pool when ``workers`` > 1."""
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _row_safe(fn):
    """Wrap a per-row function so numerical failures become a status string."""
    def wrapped(x):
        try:
            return fn(x), "ok"
        except (NoPhasematchError, DispersionRangeError) as exc:
            return str(exc), "no_phasematch"
        except GridCoverageError as exc:
            return str(exc), "grid_coverage"
        except NUMERICAL_ERRORS as exc:
            return str(exc), "numerical_error"
    return wrapped


def _phasematched(cfg):
    spec = config_mod.waveguide(cfg)
    pump = config_mod.pump(cfg)
    return spec, pump, solve_phasematch(pump.wavelength_nm, spec)


def _r_squared(x, y, degree: int) -> tuple[list, float]:
    coef = np.polyfit(x, y, degree)
    resid = y - np.polyval(coef, x)
    ss_tot = np.sum((y - np.mean(y))**2)
    return coef.tolist(), float(1 - np.sum(resid**2) / ss_tot) if ss_tot > 0 else float("nan")


def _band_exit(x, y, band=BAND):
    """First x (linearly interpolated) at which y leaves ``band``; None if it never does."""
    lo, hi = band
    for k in range(1, len(x)):
        if y[k] < lo or y[k] > hi:
            edge = lo if y[k] < lo else hi
            y0, y1 = y[k - 1], y[k]
            if y1 == y0:
                return float(x[k])
            return float(x[k - 1] + (edge - y0) / (y1 - y0) * (x[k] - x[k - 1]))
    return None


# -- commands ----------------------------------------------------------------------

def cmd_phasematch_curve(cfg, out: Path):
    spec = config_mod.waveguide(cfg)
    pumps = config_mod.sweep_values(cfg, "phasematch-curve")
    results = _map(_row_safe(lambda lp: solve_phasematch(lp, spec)), pumps, cfg["workers"])
    rows, failed = [], []
    for lp, (res, status) in zip(pumps, results):
        if status == "ok":
            rows.append([lp, res[0], res[1], status])
        else:
            rows.append([lp, None, None, status])
            failed.append({"pump_wavelength_nm": float(lp), "status": status, "error": res})
    io.write_csv(out / "phasematch-curve.csv",
                 ["pump_wavelength_nm", "signal_wavelength_nm", "idler_wavelength_nm", "status"],
                 rows)
    return {"rows": len(rows), "phasematched_rows": len(rows) - len(failed)}, failed


def cmd_jsa(cfg, out: Path):
    spec, pump, (ls, li) = _phasematched(cfg)
    grid = config_mod.grid(cfg, ls, li)
    try:
        jsa = build_jsa(grid, pump, spec)
    except GridCoverageError as exc:
        raise ConfigError(str(exc)) from exc
    result = decompose(jsa)
    meta = {"quantity": "joint spectral intensity |f|^2 (grid-normalized)",
            "row_unit": "nm", "column_unit": "nm", "grid": grid.to_dict()}
    io.write_matrix_csv(out / "jsa.csv", jsa.intensity, grid.lambda_s, grid.lambda_i,
                        "signal_wavelength_nm", "idler_wavelength_nm", meta)
    rows = []
    for axis in ("signal", "idler"):
        lam, w = marginal_spectrum(jsa, axis)
        rows += [[axis, l, v] for l, v in zip(lam, w)]
    io.write_csv(out / "jsa.marginals.csv", ["axis", "wavelength_nm", "weight"], rows)
    tracks = fwhm_tracks(grid, pump, spec)
    rows = [[name, p[0], p[1]] for name, pts in tracks.items() for p in pts]
    io.write_csv(out / "jsa.contours.csv",
                 ["track", "signal_wavelength_nm", "idler_wavelength_nm"], rows)
    result.export(out / "jsa.schmidt.json", out / "jsa.modes.csv")
    report = {"signal_wavelength_nm": ls, "idler_wavelength_nm": li,
              "schmidt": result.summary(), "coverage": coverage(jsa),
              "central_lobe_correlation": central_lobe_correlation(jsa, spec)}
    filt = config_mod.spectral_filter(cfg, ls, li)
    if filt is not None:
        filtered, transmission = apply_filter(jsa, filt)
        c = schmidt_coefficients(filtered)
        p = float(np.sum(c**4))
        report["filtered"] = {"filter": filt.to_dict(), "purity": p,
                              "g2_ss_predicted": predicted_autocorrelation(p),
                              "transmission": transmission}
    return report, []


def _bandwidth_point(cfg, spec, ls, li):
    grid = config_mod.grid(cfg, ls, li)
    filt = config_mod.spectral_filter(cfg, ls, li)

    def one(bw):
        jsa = build_jsa_covered(grid, config_mod.pump(cfg, bandwidth_nm=bw), spec)
        p = float(np.sum(schmidt_coefficients(jsa)**4))
        row = {"purity": p, "g2": predicted_autocorrelation(p),
               "spans": (jsa.grid.signal_span_nm, jsa.grid.idler_span_nm),
               "lobe": central_lobe_correlation(jsa, spec)}
        if filt is not None:
            filtered, t = apply_filter(jsa, filt)
            pf = float(np.sum(schmidt_coefficients(filtered)**4))
            row.update(purity_f=pf, g2_f=predicted_autocorrelation(pf), transmission=t)
        return row
    return one


def _parabolic_peak(x, y):
    k = int(np.argmax(y))
    if 0 < k < len(y) - 1:
        c = np.polyfit(x[k - 1:k + 2], y[k - 1:k + 2], 2)
        if c[0] < 0:
            xp = -c[1] / (2 * c[0])
            return float(xp), float(np.polyval(c, xp))
    return float(x[k]), float(y[k])


def cmd_sweep_pump_bandwidth(cfg, out: Path):
    spec, _, (ls, li) = _phasematched(cfg)
    bws = config_mod.sweep_values(cfg, "sweep-pump-bandwidth")
    one = _bandwidth_point(cfg, spec, ls, li)
    results = _map(_row_safe(one), bws, cfg["workers"])
    has_filter = config_mod.spectral_filter(cfg, ls, li) is not None
    header = ["pump_bandwidth_nm", "purity", "g2_ss_predicted"]
    if has_filter:
        header += ["filtered_purity", "filtered_g2_ss_predicted", "filter_transmission"]
    header += ["signal_span_nm", "idler_span_nm", "status"]
    rows, failed, good = [], [], []
    for bw, (res, status) in zip(bws, results):
        if status != "ok":
            failed.append({"pump_bandwidth_nm": float(bw), "status": status, "error": res})
            rows.append([bw] + [None] * (len(header) - 2) + [status])
            continue
        good.append((bw, res))
        row = [bw, res["purity"], res["g2"]]
        if has_filter:
            row += [res["purity_f"], res["g2_f"], res["transmission"]]
        rows.append(row + list(res["spans"]) + [status])
    io.write_csv(out / "sweep-pump-bandwidth.csv", header, rows)
    report = {"signal_wavelength_nm": ls, "idler_wavelength_nm": li}
    if len(good) >= 1:
        x = np.array([g[0] for g in good])
        y = np.array([g[1]["g2"] for g in good])
        k = int(np.argmax(y))
        xp, yp = _parabolic_peak(x, y)
        peak, status = _row_safe(one)(xp)
        report.update(peak_bandwidth_nm=xp, peak_g2_ss_predicted=yp,
                      peak_sample_bandwidth_nm=float(x[k]),
                      central_lobe_correlation_at_peak_sample=good[k][1]["lobe"],
                      central_lobe_correlation_at_peak=peak["lobe"] if status == "ok" else None)
    return report, failed


def _realization_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(k,)).generate_state(1, np.uint64)[0])


def cmd_sweep_inhomogeneity(cfg, out: Path):
    spec, pump, (ls, li) = _phasematched(cfg)
    block = cfg["sweep"]["sweep-inhomogeneity"]
    deltas = config_mod.sweep_values(cfg, "sweep-inhomogeneity")
    ensemble = int(block.get("ensemble", 50))
    segments = int(block.get("segments", 400))
    grid = config_mod.grid(cfg, ls, li, block.get("grid_points"))
    seeds = [_realization_seed(cfg["seed"], k) for k in range(ensemble)]

    # one task per (delta, realization); realization -1 is the linear gradient
    tasks = [(d, k) for d in deltas for k in range(-1, ensemble)]

    def one(task):
        d, k = task
        prof = LinearGradient(d) if k < 0 else RandomSegments(d, segments, seeds[k])
        return float(np.sum(schmidt_coefficients(
            build_jsa_covered(grid, pump, spec.with_profile(prof)))**4))

    results = _map(_row_safe(one), tasks, cfg["workers"])
    base = float(np.sum(schmidt_coefficients(build_jsa_covered(grid, pump, spec))**4))
    rows, failed, lin, rnd = [], [], [], []
    for j, d in enumerate(deltas):
        chunk = results[j * (ensemble + 1):(j + 1) * (ensemble + 1)]
        bad = [(k - 1, r) for k, r in enumerate(chunk) if r[1] != "ok"]
        if bad:
            failed.append({"delta_dn": float(d), "status": bad[0][1][1],
                           "realizations": [k for k, _ in bad], "error": bad[0][1][0]})
            rows.append([d, None, None, None, ensemble, bad[0][1][1]])
            continue
        p_lin = chunk[0][0]
        p_rnd = np.array([r[0] for r in chunk[1:]])
        lin.append((d, p_lin))
        rnd.append((d, float(p_rnd.mean())))
        rows.append([d, p_lin, p_rnd.mean(), p_rnd.std(ddof=1), ensemble, "ok"])
    io.write_csv(out / "sweep-inhomogeneity.csv",
                 ["delta_birefringence", "purity_linear", "purity_random_mean",
                  "purity_random_std", "ensemble_size", "status"], rows)
    report = {"homogeneous_purity": base, "band": list(BAND), "realization_seeds": seeds,
              "grid": grid.to_dict(), "segments": segments,
              "linear_band_exit": _band_exit(*zip(*lin)) if len(lin) > 1 else None,
              "random_band_exit": _band_exit(*zip(*rnd)) if len(rnd) > 1 else None}
    return report, failed


def _power_model(cfg, coefficients, det):
    noise = cfg["noise"]
    if noise.get("calibrate", False):
        return ct.calibrate_power_model(
            coefficients, det, g2_si=float(noise["g2_si_target"]),
            g2_si_power_mw=float(noise["g2_si_power_mw"]), g2_h=float(noise["g2_h_target"]),
            g2_h_power_mw=float(noise["g2_h_power_mw"]),
            power_ref_mw=float(noise.get("power_ref_mw", 100.0)),
            signal_to_idler_raman=float(noise.get("signal_to_idler_raman", 0.0)))
    return ct.PowerModel(float(noise["mu_ref"]), float(noise.get("power_ref_mw", 100.0)),
                         float(noise["raman_signal_per_mw"]), float(noise["raman_idler_per_mw"]))


def _estimate(fn, *args):
    try:
        return fn(*args)
    except ct.UndefinedEstimatorError:
        return None


def cmd_count_sim(cfg, out: Path):
    spec, pump, (ls, li) = _phasematched(cfg)
    jsa = build_jsa_covered(config_mod.grid(cfg, ls, li), pump, spec)
    coeffs = schmidt_coefficients(jsa)
    det = config_mod.detector(cfg)
    n_pulses, block = config_mod._count_settings(cfg)
    model = _power_model(cfg, coeffs, det)
    powers = config_mod.sweep_values(cfg, "count-sim")
    seed = cfg["seed"]

    def one(item):
        r, power = item
        gain, noise = model.gain(coeffs, power), model.noise(power)
        cross = ct.run_experiment(gain, det, noise, ct.Topology.CROSS, n_pulses, seed,
                                  block, stream=(r, 0))
        her = ct.run_experiment(gain, det, noise, ct.Topology.HERALDED, n_pulses, seed,
                                block, stream=(r, 1))
        expected = None
        if gain.mean_pairs > 0:
            expected = ct.expected_g2(gain, det, noise, ct.Topology.HERALDED)
        return gain.mean_pairs, cross, her, expected

    results = _map(one, list(enumerate(powers)), cfg["workers"])
    header = ["power_mw", "mean_pairs_per_pulse", "N_s", "N_i", "N_si", "eta_h",
              "eta_h_stderr", "g2_si", "g2_si_stderr", "N_i1s", "N_i2s", "N_i1i2s", "g2_h",
              "g2_h_stderr", "g2_h_expected", "status"]
    rows, failed, fit_p, fit_nsi, fit_g2h = [], [], [], [], []
    for power, (mu, cross, her, expected) in zip(powers, results):
        eta = _estimate(ct.heralding_efficiency, cross)
        gsi = _estimate(ct.g2_pulsed, cross, "s", "i")
        gh = _estimate(ct.heralded_g2, her)
        flags = [name for name, v in (("eta_h", eta), ("g2_si", gsi), ("g2_h", gh)) if v is None]
        status = "ok" if not flags else "undefined:" + "+".join(flags)
        if flags:
            failed.append({"power_mw": float(power), "status": status})
        rows.append([power, mu, cross.n("s"), cross.n("i"), cross.n("s", "i"),
                     *(eta if eta else (None, None)), *(gsi if gsi else (None, None)),
                     her.n("i1", "s"), her.n("i2", "s"), her.n("i1", "i2", "s"),
                     *(gh if gh else (None, None)), expected, status])
        fit_p.append(power)
        fit_nsi.append(cross.n("s", "i"))
        if gh is not None and power > 0:
            fit_g2h.append((power, gh.value))
    io.write_csv(out / "count-sim.csv", header, rows)

    report = {"power_model": {"mu_ref": model.mu_ref, "power_ref_mw": model.power_ref_mw,
                              "raman_signal_per_mw": model.raman_signal_per_mw,
                              "raman_idler_per_mw": model.raman_idler_per_mw},
              "schmidt_purity": float(np.sum(coeffs**4)), "n_pulses": n_pulses,
              "block_size": block}
    if len(fit_p) >= 3:
        coef, r2 = _r_squared(np.array(fit_p), np.array(fit_nsi, float), 2)
        report["coincidence_quadratic_fit"] = {"coefficients": coef, "r_squared": r2}
    if len(fit_g2h) >= 3:
        x, y = map(np.array, zip(*fit_g2h))
        coef, r2 = _r_squared(x, y, 1)
        report["g2_h_linear_fit"] = {"coefficients": coef, "r_squared": r2}
    report["low_gain"] = _low_gain(cfg, det, n_pulses, block, len(powers))
    return report, failed


def _low_gain(cfg, det, n_pulses, block, stream0):
    """Heralding and Cauchy-Schwarz statistics of a single-mode noise-free low-gain source."""
    mu = float(cfg["counting"].get("low_gain_mean_pairs", 0.01))
    gain, noise, seed = ct.SqueezingGain.single_mode(mu), ct.NoiseModel(), cfg["seed"]
    recs = {t: ct.run_experiment(gain, det, noise, t, n_pulses, seed, block,
                                 stream=(stream0, j))
            for j, t in enumerate((ct.Topology.CROSS, ct.Topology.SIGNAL_AUTO,
                                   ct.Topology.IDLER_AUTO))}
    out = {"mean_pairs": mu}
    eta = _estimate(ct.heralding_efficiency, recs[ct.Topology.CROSS])
    if eta is not None:
        prep = ct.preparation_efficiency(eta.value, det.eta_detector)
        out.update(eta_h=eta.value, eta_h_stderr=eta.stderr, eta_p=prep.value,
                   eta_p_consistent=prep.consistent)
    gsi = _estimate(ct.g2_pulsed, recs[ct.Topology.CROSS], "s", "i")
    gss = _estimate(ct.g2_pulsed, recs[ct.Topology.SIGNAL_AUTO], "s1", "s2")
    gii = _estimate(ct.g2_pulsed, recs[ct.Topology.IDLER_AUTO], "i1", "i2")
    if None not in (gsi, gss, gii):
        violated, margin = cauchy_schwarz_violation(
            gsi.value, gss.value, gii.value, (gsi.stderr, gss.stderr, gii.stderr))
        out.update(g2_si=list(gsi), g2_ss=list(gss), g2_ii=list(gii),
                   cauchy_schwarz_violated=violated, cauchy_schwarz_margin_sigma=margin)
    return out


COMMANDS = {
    "phasematch-curve": cmd_phasematch_curve,
    "jsa": cmd_jsa,
    "sweep-pump-bandwidth": cmd_sweep_pump_bandwidth,
    "sweep-inhomogeneity": cmd_sweep_inhomogeneity,
    "count-sim": cmd_count_sim,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sfwm", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--preset", choices=sorted(config_mod.PRESETS),
                   help="built-in defaults merged under --config")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
    p.add_argument("--workers", type=int, help="worker threads for per-sample work")
    return p


def _echo(cfg: dict) -> dict:
    # the worker count does not affect results, so it stays out of the outputs
    echo = copy.deepcopy(cfg)
    echo.pop("workers", None)
    return echo


def run(command: str, cfg: dict, out: Path) -> int:
    """Validate ``cfg`` for ``command``, run it and write its report; returns the exit code."""
    report_path = out / f"{command}.report.json"
    try:
        cfg = copy.deepcopy(cfg)
        cfg.setdefault("seed", 0)
        cfg.setdefault("workers", 1)
        config_mod.validate(cfg, command)
        results, failed = COMMANDS[command](cfg, out)
    except NUMERICAL_ERRORS as exc:
        io.write_json(report_path, {"command": command, "status": "numerical_error",
                                    "error": f"{type(exc).__name__}: {exc}", "config": _echo(cfg)})
        print(f"sfwm {command}: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        # domain errors raised while building models from the config are input problems
        io.write_json(report_path, {"command": command, "status": "config_error",
                                    "error": f"{type(exc).__name__}: {exc}", "config": _echo(cfg)})
        print(f"sfwm {command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    io.write_json(report_path, {"command": command, "status": "partial" if failed else "ok",
                                "failed_rows": failed, "results": results,
                                "config": _echo(cfg)})
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        if args.config is None and args.preset is None:
            raise ConfigError("give --config, --preset or both")
        cfg = config_mod.load(args.config, args.preset, overrides)
    except ConfigError as exc:
        io.write_json(args.out / f"{args.command}.report.json",
                      {"command": args.command, "status": "config_error", "error": str(exc)})
        print(f"sfwm {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.command, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
