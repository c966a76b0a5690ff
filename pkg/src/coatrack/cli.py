"""Command-line front end.

Subcommands emit plot-ready CSV data (no figures): ``phase-profile`` sweeps a
source along a line and records every antenna's differential phase,
``fim-sweep`` tabulates the closed-form ranging/bearing information versus
normalized distance, ``bound`` produces the position-error bound trace, and
``track`` runs a full Monte Carlo tracking campaign.

Configs are YAML with explicit units in key names (angles in degrees,
lengths in meters); unknown keys are rejected with a diagnostic naming the
offending key.  All outputs are written atomically (temp file + rename).
Exit codes: 0 ok, 1 run failure, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np
import yaml

from . import fisher, harness, pcrlb
from .geometry import field_boundaries, make_circular_array, make_rectangular_array
from .observation import MeasurementModel, observe_clean

SCHEMA_PREFIX = "coatrack"


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending key."""


# --------------------------------------------------------------------------
# config loading and validation

def _check_keys(mapping, allowed, required, path):
    if not isinstance(mapping, dict):
        raise ConfigError(f"'{path}' must be a mapping")
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key '{path}.{key}'")
    for key in required:
        if key not in mapping:
            raise ConfigError(f"missing key '{path}.{key}'")


def _load_yaml(path):
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    return doc


def _parse_array_spec(spec, path="array"):
    _check_keys(
        spec,
        allowed={"kind", "n_y", "n_z", "spacing_m", "n", "diameter_m", "reference_m", "label"},
        required={"kind"},
        path=path,
    )
    kind = spec["kind"]
    reference = spec.get("reference_m", [0.0, 0.0, 0.0])
    if kind == "rectangular":
        for key in ("n_y", "n_z", "spacing_m"):
            if key not in spec:
                raise ConfigError(f"missing key '{path}.{key}'")
        return dict(
            kind=kind, n_y=int(spec["n_y"]), n_z=int(spec["n_z"]),
            spacing=float(spec["spacing_m"]), reference=tuple(reference),
        )
    if kind == "circular":
        for key in ("n", "diameter_m"):
            if key not in spec:
                raise ConfigError(f"missing key '{path}.{key}'")
        return dict(
            kind=kind, n=int(spec["n"]), diameter=float(spec["diameter_m"]),
            reference=tuple(reference),
        )
    raise ConfigError(f"'{path}.kind' must be rectangular or circular, got {kind!r}")


def _build_geometry(parsed):
    if parsed["kind"] == "rectangular":
        return make_rectangular_array(
            parsed["n_y"], parsed["n_z"], parsed["spacing"], parsed["reference"]
        )
    return make_circular_array(parsed["n"], parsed["diameter"], parsed["reference"])


def load_scenario(path, seed_override=None) -> harness.Scenario:
    """Parse a tracking-scenario config file into a Scenario."""
    doc = _load_yaml(path)
    _check_keys(
        doc,
        allowed={"array", "lambda_m", "sigma_deg", "gamma_m", "motion", "truth",
                 "prior", "tracking", "bound", "metrics"},
        required={"array", "lambda_m", "sigma_deg", "truth", "prior", "tracking"},
        path="config",
    )
    arr = _parse_array_spec(doc["array"])
    if arr["kind"] == "circular":
        array_kwargs = dict(array_kind="circular", ring_n=arr["n"],
                            ring_diameter=arr["diameter"])
    else:
        array_kwargs = dict(array_kind="rectangular", n_y=arr["n_y"], n_z=arr["n_z"],
                            spacing=arr["spacing"])

    motion = doc.get("motion", {})
    _check_keys(motion, {"tau_s", "accel_std_m_step3", "gamma_t_tracker"}, set(), "motion")
    truth = doc["truth"]
    _check_keys(truth, {"initial_state", "waypoints_m"}, {"initial_state"}, "truth")
    prior = doc["prior"]
    _check_keys(prior, {"mean", "std"}, {"std"}, "prior")
    tracking = doc["tracking"]
    _check_keys(
        tracking,
        {"steps", "trackers", "particles", "runs", "seed", "mle_starts",
         "mle_box_m", "pinv_rtol", "likelihood_spread_std"},
        {"steps", "trackers", "runs", "seed"},
        "tracking",
    )
    bound = doc.get("bound", {})
    _check_keys(bound, {"n_traj"}, set(), "bound")
    metrics = doc.get("metrics", {})
    _check_keys(metrics, {"cdf_max_m", "cdf_points"}, set(), "metrics")

    waypoints = truth.get("waypoints_m")
    prior_mean = prior.get("mean")
    try:
        scenario = harness.Scenario(
            **array_kwargs,
            reference=tuple(arr["reference"]),
            lam=float(doc["lambda_m"]),
            sigma=float(np.deg2rad(doc["sigma_deg"])),
            gamma_m=float(doc.get("gamma_m", 0.0)),
            tau=float(motion.get("tau_s", 1.0)),
            accel_std=tuple(motion.get("accel_std_m_step3", (0.03, 0.03, 0.0))),
            gamma_t=float(motion.get("gamma_t_tracker", 1.0)),
            s0=tuple(truth["initial_state"]),
            waypoints=tuple(map(tuple, waypoints)) if waypoints is not None else None,
            prior_mean=tuple(prior_mean) if prior_mean is not None else None,
            prior_std=tuple(prior["std"]),
            steps=int(tracking["steps"]),
            trackers=tuple(tracking["trackers"]),
            particles=int(tracking.get("particles", 1000)),
            n_runs=int(tracking["runs"]),
            seed=int(seed_override if seed_override is not None else tracking["seed"]),
            mle_starts=int(tracking.get("mle_starts", 32)),
            mle_box=tuple(map(tuple, tracking.get(
                "mle_box_m", ((0.5, 4.5), (-12.0, 12.0), (1.0, 2.0))))),
            likelihood_spread_std=(
                tuple(tracking["likelihood_spread_std"])
                if tracking.get("likelihood_spread_std") is not None else None
            ),
            pinv_rtol=float(tracking.get("pinv_rtol", 1e-10)),
            pcrlb_n_traj=int(bound.get("n_traj", 200)),
            cdf_max=float(metrics.get("cdf_max_m", 5.0)),
            cdf_points=int(metrics.get("cdf_points", 101)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return scenario


# --------------------------------------------------------------------------
# atomic writers

def _write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(schema, header, rows, comments=()):
    lines = [f"# schema={SCHEMA_PREFIX}.{schema}"]
    lines.extend(f"# {c}" for c in comments)
    lines.append(",".join(header))
    for row in rows:
        lines.append(
            ",".join(
                repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                for v in row
            )
        )
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# subcommands

def cmd_phase_profile(config_path, out_dir, seed=None):
    doc = _load_yaml(config_path)
    _check_keys(doc, {"array", "lambda_m", "sweep"}, {"array", "lambda_m", "sweep"}, "config")
    sweep = doc["sweep"]
    _check_keys(sweep, {"source_start_m", "source_stop_m", "steps"},
                {"source_start_m", "source_stop_m", "steps"}, "sweep")
    geom = _build_geometry(_parse_array_spec(doc["array"]))
    lam = float(doc["lambda_m"])
    model = MeasurementModel(geom, lam, 0.0)
    steps = int(sweep["steps"])
    if steps < 1:
        raise ConfigError("'sweep.steps' must be >= 1")
    start = np.asarray(sweep["source_start_m"], dtype=float)
    stop = np.asarray(sweep["source_stop_m"], dtype=float)
    ts = np.linspace(0.0, 1.0, steps)
    points = start + ts[:, None] * (stop - start)
    if np.any(np.all(np.isclose(points, geom.reference, atol=1e-12), axis=1)):
        raise ConfigError("sweep passes through the reference location; adjust steps")
    phases = observe_clean(model, points)  # (steps, N)
    rows = []
    for i in range(steps):
        for n in range(geom.n_antennas):
            rows.append((i, float(points[i, 0]), float(points[i, 1]),
                         float(points[i, 2]), n, float(phases[i, n])))
    _write_atomic(
        os.path.join(out_dir, "phase_profile.csv"),
        _csv_text("phase_profile.v1",
                  ("step", "x_m", "y_m", "z_m", "antenna", "phase_rad"), rows),
    )
    return 0


def cmd_fim_sweep(config_path, out_dir, seed=None):
    doc = _load_yaml(config_path)
    _check_keys(doc, {"lambda_m", "sigma_deg", "arrays", "sweep"},
                {"lambda_m", "sigma_deg", "arrays", "sweep"}, "config")
    sweep = doc["sweep"]
    _check_keys(sweep, {"d_over_diameter_min", "d_over_diameter_max", "points",
                        "log_spacing"},
                {"d_over_diameter_min", "d_over_diameter_max", "points"}, "sweep")
    lam = float(doc["lambda_m"])
    sigma = float(np.deg2rad(doc["sigma_deg"]))
    lo = float(sweep["d_over_diameter_min"])
    hi = float(sweep["d_over_diameter_max"])
    points = int(sweep["points"])
    if points < 1 or hi <= lo or lo <= 0.0:
        raise ConfigError("'sweep' range must satisfy 0 < min < max and points >= 1")
    if sweep.get("log_spacing", True):
        ratios = np.geomspace(lo, hi, points)
    else:
        ratios = np.linspace(lo, hi, points)

    if not isinstance(doc["arrays"], list) or not doc["arrays"]:
        raise ConfigError("'arrays' must be a non-empty list")
    rows = []
    for i, spec in enumerate(doc["arrays"]):
        parsed = _parse_array_spec(spec, path=f"arrays[{i}]")
        label = spec.get("label", f"array{i}")
        if parsed["kind"] == "circular":
            diameter = parsed["diameter"]

            def closed_form(d, p=parsed):
                return fisher.fim_circular(p["n"], p["diameter"], lam, sigma, d)

        else:
            if abs(parsed["spacing"] - lam / 2.0) > 1e-12:
                raise ConfigError(
                    f"arrays[{i}]: the rectangular closed form assumes "
                    "half-wavelength spacing; set spacing_m = lambda_m / 2"
                )
            diameter = parsed["spacing"] * float(np.hypot(parsed["n_y"] - 1, parsed["n_z"] - 1))

            def closed_form(d, p=parsed):
                return fisher.fim_rectangular(p["n_y"], p["n_z"], lam, sigma, d)

        fraunhofer = field_boundaries(diameter, lam)[1]
        for ratio in ratios:
            d = ratio * diameter
            j_d, j_t, j_p = closed_form(d)
            err = float(np.sqrt(1.0 / j_d)) if j_d > 0 else float("inf")
            rows.append(
                (label, float(d), float(ratio), j_d, j_t, j_p, err,
                 0.001 * d, fraunhofer, int(d > fraunhofer))
            )
    _write_atomic(
        os.path.join(out_dir, "fim_sweep.csv"),
        _csv_text(
            "fim_sweep.v1",
            ("array", "d_m", "d_over_diameter", "j_range", "j_elevation",
             "j_azimuth", "range_error_m", "threshold_m", "fraunhofer_m",
             "beyond_fraunhofer"),
            rows,
        ),
    )
    return 0


def cmd_bound(config_path, out_dir, seed=None):
    scenario = load_scenario(config_path, seed_override=seed)
    trace = pcrlb.run_pcrlb(scenario)
    rows = []
    for k in range(scenario.steps):
        diag = np.diag(trace.cov[k])
        rows.append((k, float(trace.peb[k]), *(float(v) for v in diag)))
    comments = [f"flags: {json.dumps(trace.flags, sort_keys=True)}"]
    _write_atomic(
        os.path.join(out_dir, "bound.csv"),
        _csv_text(
            "bound.v1",
            ("k", "peb_m", "var_x", "var_y", "var_z", "var_vx", "var_vy", "var_vz"),
            rows,
            comments,
        ),
    )
    return 0


def cmd_track(config_path, out_dir, seed=None, threads=1):
    scenario = load_scenario(config_path, seed_override=seed)
    records, summary = harness.run_campaign(scenario, threads=threads)

    runs_header = ["run", "k", "truth_x", "truth_y", "truth_z"]
    for name in scenario.trackers:
        runs_header.extend([f"{name}_x", f"{name}_y", f"{name}_z", f"{name}_err"])
    runs_rows = []
    for rec in records:
        for k in range(scenario.steps):
            row = [rec.run, k, *(float(v) for v in rec.truth[k, :3])]
            for name in scenario.trackers:
                row.extend(float(v) for v in rec.estimates[name][k, :3])
                row.append(float(rec.errors[name][k]))
            runs_rows.append(tuple(row))
    _write_atomic(
        os.path.join(out_dir, "runs.csv"),
        _csv_text("runs.v1", runs_header, runs_rows),
    )

    thresholds = scenario.cdf_thresholds()
    cdf_rows = []
    for name in scenario.trackers:
        pooled = np.concatenate([rec.errors[name] for rec in records])
        cdf = harness.empirical_cdf(pooled, thresholds)
        cdf_rows.extend(
            (name, float(th), float(c)) for th, c in zip(thresholds, cdf)
        )
    _write_atomic(
        os.path.join(out_dir, "cdf.csv"),
        _csv_text("cdf.v1", ("tracker", "e_th_m", "cdf"), cdf_rows),
    )
    _write_atomic(
        os.path.join(out_dir, "summary.json"),
        json.dumps(summary, indent=2, sort_keys=True) + "\n",
    )
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coatrack",
        description="Near-field tracking simulator: phase profiles, information "
                    "bounds, and Monte Carlo tracking campaigns.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("phase-profile", "differential phases along a source sweep line"),
        ("fim-sweep", "closed-form ranging/bearing information vs distance"),
        ("bound", "position-error bound trace for a scenario"),
        ("track", "Monte Carlo tracking campaign"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="YAML config path")
        cmd.add_argument("--seed", type=int, default=None, help="master seed override")
        cmd.add_argument("--out-dir", default=".", help="output directory")
        cmd.add_argument("--threads", type=int, default=1, help="worker processes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "phase-profile": lambda: cmd_phase_profile(args.config, args.out_dir, args.seed),
        "fim-sweep": lambda: cmd_fim_sweep(args.config, args.out_dir, args.seed),
        "bound": lambda: cmd_bound(args.config, args.out_dir, args.seed),
        "track": lambda: cmd_track(args.config, args.out_dir, args.seed, args.threads),
    }
    try:
        return handlers[args.command]()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # run failure
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
