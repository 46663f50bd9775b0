"""Command-line experiment runner.

``qudit-forge characterize|qft|echo|decay|tomo --config <path> [--check] [--out <dir>]``

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance threshold missed in ``--check`` mode. Thread count for the
ensemble loops comes from ``QUDIT_FORGE_THREADS``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import warnings
from importlib import metadata
from dataclasses import replace

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .dynamics import PropagationContext, PulseSpec, Segment, calibrate_amplitude, evolve
from .ensemble import (
    ensemble_experiment,
    estimate_t2_star,
    hahn_echo,
    initial_state_unitary,
    matched_sigma,
    sample_ensemble,
)
from .gates import (
    GateSequence,
    PlanarRotation,
    decompose_unitary,
    insert_refocusing,
    qft_unitary,
    schedule_to_json,
    to_schedule,
)
from .io import decode_complex_matrix, matrix_csv_rows, matrix_to_json, sha256_file, write_csv, write_json
from .spin_model import LabelingError, NumericalError, boltzmann_populations, diagonalize, select_qutrit
from .tomography import (
    Q_IDS,
    TomographyRecord,
    element_map,
    fidelity_report,
    normalize_intensities,
    q_from_intensity,
    reconstruct,
)

log = logging.getLogger("qudit_forge")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 2, 3, 4

# reference values used by --check
REF_F01, REF_F12, FREQ_TOL = 333.0, 359.9, 2.0
REF_DP01, REF_DP12, POP_TOL = 7.705e-4, 8.343e-4, 0.01


def _threads():
    raw = os.environ.get("QUDIT_FORGE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"QUDIT_FORGE_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


class Run:
    """Collects outputs and check results of one command."""

    def __init__(self, cfg: ExperimentConfig, command):
        self.cfg = cfg
        self.command = command
        self.outputs = []
        self.checks = []
        self.summary = {}
        self.extra = {}

    def path(self, name):
        return self.cfg.out_dir / name

    def csv(self, name, header, rows):
        self.outputs.append(write_csv(self.path(name), header, rows))

    def json(self, name, obj):
        self.outputs.append(write_json(self.path(name), obj))

    def check(self, name, ok, detail):
        self.checks.append({"name": name, "pass": bool(ok), "detail": detail})


# ---------------------------------------------------------------------------
# characterize


def cmd_characterize(run: Run):
    cfg = run.cfg
    eig = diagonalize(cfg.params, cfg.field)
    pops = boltzmann_populations(eig, cfg.temperature)
    labels = eig.labels or [(float("nan"), float("nan"))] * eig.dim
    run.csv(
        "levels.csv",
        ["index", "energy_MHz", "m_S", "m_I", "label_overlap", "population"],
        [
            (k, eig.energies[k], labels[k][0], labels[k][1], eig.label_overlaps[k], pops[k])
            for k in range(eig.dim)
        ],
    )
    try:
        q = select_qutrit(eig)
    except LabelingError as exc:
        warnings.warn(f"qutrit labeling is ambiguous: {exc}")
        run.summary["labeling"] = f"ambiguous: {exc}"
        run.check("qutrit labeling", False, str(exc))
        return
    ctx = PropagationContext.build(cfg.params, cfg.field)
    rows = []
    for tr in ((0, 1), (1, 2)):
        k, l = ctx.levels(tr)
        rows.append((f"{tr[0]}{tr[1]}", k, l, ctx.frequency(tr), abs(ctx.mz[k, l])))
    run.csv("transitions.csv", ["transition", "level_lower", "level_upper", "f_MHz", "abs_Mz_MHz_per_T"], rows)
    i0, i1, i2 = q.indices
    dp01, dp12 = pops[i0] - pops[i1], pops[i1] - pops[i2]
    run.csv(
        "populations.csv",
        ["quantity", "value"],
        [("p0", pops[i0]), ("p1", pops[i1]), ("p2", pops[i2]), ("p0-p1", dp01), ("p1-p2", dp12)],
    )
    run.summary.update(f01_MHz=q.f_01, f12_MHz=q.f_12, dp01=dp01, dp12=dp12, qutrit_indices=list(q.indices))
    run.check("f01 within 2 MHz of 333.0", abs(q.f_01 - REF_F01) <= FREQ_TOL, f"{q.f_01:.3f} MHz")
    run.check("f12 within 2 MHz of 359.9", abs(q.f_12 - REF_F12) <= FREQ_TOL, f"{q.f_12:.3f} MHz")
    run.check("p0-p1 within 1% of 7.705e-4", abs(dp01 / REF_DP01 - 1) <= POP_TOL, f"{dp01:.4e}")
    run.check("p1-p2 within 1% of 8.343e-4", abs(dp12 / REF_DP12 - 1) <= POP_TOL, f"{dp12:.4e}")


# ---------------------------------------------------------------------------
# qft


def _target_unitary(cfg):
    seq = cfg.sequence
    if seq["kind"] == "qft":
        return qft_unitary(3)
    doc = json.loads(cfg.resolve(seq["path"]).read_text())
    if "unitary" in doc:
        return decode_complex_matrix(doc["unitary"])
    if "rotations" in doc:
        rots = [PlanarRotation(*r["transition"], r["theta"], r.get("phi", 0.0)) for r in doc["rotations"]]
        return GateSequence(items=rots).unitary()
    raise ConfigError(f"{seq['path']}: expected a 'unitary' or 'rotations' entry")


def _ideal_state(cfg, U):
    W = initial_state_unitary(cfg.initial_state)
    rho0 = np.outer(W[:, 0], W[:, 0].conj())
    return rho0, U @ rho0 @ U.conj().T


def cmd_qft(run: Run):
    cfg = run.cfg
    U = _target_unitary(cfg)
    plain = decompose_unitary(U)
    rho0, ideal = _ideal_state(cfg, U)
    instances = sample_ensemble(cfg.ensemble, cfg.params, cfg.field)
    kw = dict(
        initial_state=cfg.initial_state,
        T=cfg.temperature,
        t_pi=cfg.t_pi,
        mode=cfg.mode,
        spacing=cfg.spacing,
        detection=cfg.detection,
        dephasing=cfg.dephasing if cfg.dephasing.enabled else None,
        crosstalk=cfg.crosstalk,
        lab_dt=cfg.lab_dt,
        workers=_threads(),
    )
    runs = {}
    if cfg.refocus_mode in ("off", "both"):
        runs["plain"] = [plain]
    if cfg.refocus_mode in ("on", "both"):
        runs["refocused"] = [insert_refocusing(plain, cfg.refocus, v) for v in cfg.sequence["variants"]]
    run.json("rho_ideal.json", {"rho": matrix_to_json(ideal), "rho0": matrix_to_json(rho0)})
    table = []
    mapping = {}
    for name, seqs in runs.items():
        records = []
        for seq in seqs:
            log.info("running %s sequence (variant %s, %d pulses)", name, seq.variant, seq.n_pulses)
            rec = ensemble_experiment(instances, seq, **kw)
            records.append(rec)
            tag = f"{name}_{seq.variant}"
            run.json(f"schedule_{tag}.json", json.loads(schedule_to_json(to_schedule(seq, cfg.t_pi, cfg.spacing), seq)))
            run.json(f"record_{tag}.json", rec.to_dict())
            emap = element_map(rec.permutation, rec.last_pi)
            mapping[tag] = {f"{i}{j}": f"{a}{b}" for (i, j), (a, b) in emap.items()}
        rho = reconstruct(records).matrix
        rep = fidelity_report(rho, ideal)
        run.json(f"rho_{name}.json", {"rho": matrix_to_json(rho), "rho_projected": matrix_to_json(rep.rho_exp.matrix)})
        run.csv(f"rho_{name}.csv", ["i", "j", "re", "im", "abs", "phase"], matrix_csv_rows(rho))
        att = {
            f"{i}{j}": (abs(rho[i, j]) / abs(ideal[i, j]) if abs(ideal[i, j]) > 1e-12 else float("nan"))
            for i, j in ((0, 1), (1, 2), (0, 2))
        }
        table.append((name, rep.F, abs(rep.removed_weight), rep.flagged, att["01"], att["12"], att["02"]))
        run.summary[name] = {"fidelity": rep.F, "psd_removed": abs(rep.removed_weight), "coherence_ratio": att}
    run.extra["variant_element_map"] = mapping
    run.csv(
        "fidelity.csv",
        ["sequence", "fidelity", "psd_removed", "flagged", "abs_rho01_ratio", "abs_rho12_ratio", "abs_rho02_ratio"],
        table,
    )
    superposition = not isinstance(cfg.initial_state, int)
    if "refocused" in run.summary:
        thr = 0.97 if superposition else 0.98
        F = run.summary["refocused"]["fidelity"]
        run.check(f"refocused fidelity >= {thr}", F >= thr, f"F = {F:.4f}")
    if "plain" in run.summary:
        F = run.summary["plain"]["fidelity"]
        run.check("plain fidelity < 0.92", F < 0.92, f"F = {F:.4f}")
        r02 = run.summary["plain"]["coherence_ratio"]["02"]
        if np.isfinite(r02):
            run.check("plain |rho02| below 60% of ideal", r02 < 0.6, f"ratio = {r02:.3f}")


# ---------------------------------------------------------------------------
# echo


def _echo_set(run, specs, settings, suffix):
    rows, results = [], {}
    for tgt, spec in specs.items():
        instances = sample_ensemble(spec, run.cfg.params, run.cfg.field)
        for tr in ((0, 1), (1, 2)):
            trace = hahn_echo(instances, tr, settings.tau, T=run.cfg.temperature, settings=settings, workers=_threads())
            t2 = estimate_t2_star(trace)
            run.csv(f"echo_{tgt}_{tr[0]}{tr[1]}{suffix}.csv", ["t_ns", "re", "im"], trace.to_csv_rows())
            rows.append((settings.t_pi, tgt, f"{tr[0]}{tr[1]}", spec.relative_sigma, t2.value,
                         t2.instrument_limited, trace.instrument_width))
            results[(tgt, tr)] = t2
    return rows, results


def cmd_echo(run: Run):
    cfg = run.cfg
    hyper = replace(cfg.ensemble, strain_target="hyperfine", independent=False)
    specs = {}
    for tgt in cfg.echo["strain_targets"]:
        if tgt == "hyperfine":
            specs[tgt] = hyper
        else:
            sigma = cfg.echo.get("zeeman_sigma")
            if sigma is None:
                sigma = matched_sigma(hyper, "zeeman", (0, 1), cfg.params, cfg.field)
            specs[tgt] = replace(hyper, strain_target="zeeman", relative_sigma=sigma)
    specs["none"] = replace(hyper, relative_sigma=0.0)
    rows, results = _echo_set(run, specs, cfg.detection, "")
    # a shorter detection pulse widens the filter so narrow echoes stay resolvable
    short = replace(cfg.detection, t_pi=cfg.echo["resolved_t_pi"])
    resolved = results
    if short.t_pi != cfg.detection.t_pi:
        more, resolved = _echo_set(run, specs, short, f"_tpi{short.t_pi:g}")
        rows += more
    run.csv("t2star.csv", ["detection_t_pi_ns", "strain", "transition", "relative_sigma", "t2star_ns",
                           "instrument_limited", "instrument_width_ns"], rows)
    run.summary["t2star_ns"] = {f"{r[1]}_{r[2]}@{r[0]:g}": r[4] for r in rows}
    if "hyperfine" in specs:
        a, b = results[("hyperfine", (0, 1))], results[("hyperfine", (1, 2))]
        inside = all(250 <= x.value <= 1000 for x in (a, b))
        run.check("hyperfine T2* in [250, 1000] ns", inside, f"{a.value:.0f} / {b.value:.0f} ns")
        ratio = max(a.value, b.value) / min(a.value, b.value)
        run.check("hyperfine transitions agree within 1.5x", ratio <= 1.5, f"ratio {ratio:.2f}")
    if "zeeman" in specs:
        a, b = resolved[("zeeman", (0, 1))], resolved[("zeeman", (1, 2))]
        ratio = a.value / b.value
        detail = f"detection t_pi {short.t_pi:g} ns: (0,1) {a.value:.0f} ns, (1,2) {b.value:.0f} ns, ratio {ratio:.2f}"
        if b.instrument_limited:
            detail += "; (1,2) echo is at the detection-bandwidth limit"
        run.check("zeeman (1,2) echo >= 1.5x shorter", ratio >= 1.5 and not b.instrument_limited, detail)
    z = results[("none", (0, 1))]
    run.check("zero strain flagged instrument limited", z.instrument_limited, f"{z.value:.0f} ns")


# ---------------------------------------------------------------------------
# decay


def _rabi_curve(ctx, tr, t_pi, durations, mode, lab_dt):
    amp = calibrate_amplitude(ctx, tr, t_pi)
    k, l = ctx.levels(tr)
    phase = float(np.angle(ctx.mz[k, l]))
    rho0 = np.zeros((ctx.dim, ctx.dim), complex)
    rho0[k, k] = 1
    out = []
    for d in durations:
        if d == 0:
            out.append((0.0, 1.0, 0.0))
            continue
        if mode == "ideal":
            pu = np.sin(np.pi * d / (2 * t_pi)) ** 2
            out.append((d, 1 - pu, pu))
            continue
        seg = Segment(0.0, float(d), PulseSpec(ctx.frequency(tr), phase, float(d), amp))
        r = evolve(rho0, [seg], ctx, mode, crosstalk=False, dt=lab_dt)
        out.append((d, r[k, k].real, r[l, l].real))
    return np.array(out)


def _fit_period(t, p_upper, guess):
    from scipy.optimize import curve_fit

    f = lambda t, T, a: a * np.sin(np.pi * t / T) ** 2
    (T, _), _ = curve_fit(f, t, p_upper, p0=(guess, 1.0))
    return abs(float(T))


def cmd_decay(run: Run):
    cfg = run.cfg
    ctx = PropagationContext.build(cfg.params, cfg.field)
    durations = np.linspace(0.0, cfg.decay["max_duration_ns"], cfg.decay["n_points"])
    for tr in ((0, 1), (1, 2)):
        curve = _rabi_curve(ctx, tr, cfg.t_pi, durations, cfg.mode, cfg.lab_dt)
        run.csv(f"rabi_{tr[0]}{tr[1]}.csv", ["duration_ns", "p_lower", "p_upper"], curve)
        period = _fit_period(curve[:, 0], curve[:, 2], 2 * cfg.t_pi)
        run.summary[f"rabi_period_{tr[0]}{tr[1]}_ns"] = period
        run.check(
            f"Rabi period on {tr} equals 2 t_pi",
            abs(period / (2 * cfg.t_pi) - 1) < 0.01,
            f"{period:.1f} ns vs {2 * cfg.t_pi:.1f} ns",
        )
    model = cfg.dephasing
    t_us = np.linspace(0.0, cfg.decay["t_max_us"], 301)
    cols, header = [t_us], ["t_us"]
    for name, pair in (("01", (0, 1)), ("12", (1, 2)), ("02", (0, 2))):
        if pair in model.T2_map and model.enabled:
            cols.append(model.decay(t_us * 1e3, model.T2_map[pair]))
        else:
            cols.append(np.ones_like(t_us))
        header.append(f"coherence_{name}")
    run.csv("t2_decay.csv", header, np.column_stack(cols))
    for pair, t2 in model.T2_map.items():
        if not model.enabled:
            break
        val = float(model.decay(t2 * 1e3, t2))
        run.check(f"decay of {pair} reaches 1/e at T2", abs(val - np.exp(-1)) < 1e-9, f"{val:.6f}")


# ---------------------------------------------------------------------------
# tomo


def cmd_tomo(run: Run):
    cfg = run.cfg
    if "intensities" not in cfg.tomo:
        raise ConfigError("config field 'tomo/intensities': path to the intensities JSON is required")
    doc = json.loads(cfg.resolve(cfg.tomo["intensities"]).read_text())
    cz = lambda v: complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v)
    records = []
    for entry in doc.get("records", []):
        if "q_values" in entry:
            records.append(TomographyRecord.from_dict(entry))
            continue
        if "pop_diffs" in entry:
            dp01, dp12 = entry["pop_diffs"]
        else:
            q = select_qutrit(diagonalize(cfg.params, cfg.field))
            p = boltzmann_populations(diagonalize(cfg.params, cfg.field), cfg.temperature)
            i0, i1, i2 = q.indices
            dp01, dp12 = p[i0] - p[i1], p[i1] - p[i2]
        eq = {k: cz(v) for k, v in entry["eq"].items()}
        pur = {k: cz(v) for k, v in entry["pur"].items()}
        alpha = normalize_intensities(pur["01"], pur["12"], eq["01"], eq["12"], (dp01, dp12))
        raw = {k: cz(v) for k, v in entry["intensities"].items()}
        missing = [k for k in Q_IDS if k not in raw]
        if missing:
            raise ConfigError(f"intensities record is missing {missing}")
        detect = {"p01": "01", "re01": "01", "im01": "01", "re02": "01", "im02": "01",
                  "p12": "12", "re12": "12", "im12": "12"}
        dps = {"01": dp01, "12": dp12}
        qv = {k: q_from_intensity(raw[k], eq[detect[k]], dps[detect[k]], alpha) for k in Q_IDS}
        last = entry.get("last_pi")
        if last is not None:
            last = PlanarRotation(*last["transition"], last.get("theta", np.pi), last.get("phi", 0.0), role="last_pi")
        records.append(
            TomographyRecord(
                q_values=qv,
                raw_intensities=raw,
                alpha=alpha,
                variant=entry.get("variant", "none"),
                permutation=tuple(entry.get("permutation", (0, 1, 2))),
                last_pi=last,
                eq_intensities=eq,
                pur_intensities=pur,
            )
        )
    if not records:
        raise ConfigError("intensities file holds no records")
    rho = reconstruct(records).matrix
    run.json("rho_reconstructed.json", {"rho": matrix_to_json(rho), "records": [r.to_dict() for r in records]})
    run.csv("rho_reconstructed.csv", ["i", "j", "re", "im", "abs", "phase"], matrix_csv_rows(rho))
    if "ideal" in doc:
        rep = fidelity_report(rho, decode_complex_matrix(doc["ideal"]))
        run.summary.update(fidelity=rep.F, psd_removed=rep.removed_weight, flagged=rep.flagged)
        run.check("PSD projection removed <= 5% weight", not rep.flagged, f"{rep.removed_weight:.4f}")


COMMANDS = {
    "characterize": cmd_characterize,
    "qft": cmd_qft,
    "echo": cmd_echo,
    "decay": cmd_decay,
    "tomo": cmd_tomo,
}


def _versions():
    out = {"python": platform.python_version()}
    for dist in ("qudit-forge", "numpy", "scipy", "jsonschema"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = __version__ if dist == "qudit-forge" else "unknown"
    return out


def _write_manifest(run: Run, config_path):
    cfg = run.cfg
    manifest = {
        "command": run.command,
        "config": str(config_path),
        "config_sha256": sha256_file(config_path),
        "config_resolved": cfg.raw,
        "seed": cfg.ensemble.seed,
        "sampling": cfg.ensemble.sampling,
        "threads": _threads(),
        "versions": _versions(),
        "outputs": {str(p.relative_to(cfg.out_dir)): sha256_file(p) for p in run.outputs},
        "summary": run.summary,
        "checks": run.checks,
        **run.extra,
    }
    write_json(cfg.out_dir / f"manifest_{run.command}.json", manifest)


def build_parser():
    p = argparse.ArgumentParser(prog="qudit-forge", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--check", action="store_true", help="exit 4 when an acceptance threshold is missed")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, out_override=args.out)
        run = Run(cfg, args.command)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            warnings.showwarning = lambda m, c, *a, **k: print(f"warning: {m}", file=sys.stderr)
            COMMANDS[args.command](run)
        _write_manifest(run, args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except LabelingError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for c in run.checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: {c['detail']}")
    for k, v in run.summary.items():
        print(f"{k}: {json.dumps(v, default=float) if isinstance(v, dict) else v}")
    if args.check and not all(c["pass"] for c in run.checks):
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
