"""Command line interface.

Every command writes its outputs plus ``manifest.ini`` (the fully resolved
configuration and seeds) into ``--out``. ``wavefield rerun manifest.ini``
or ``wavefield <command> --config manifest.ini`` reproduces a run.
"""
from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__, attention, bench, formats, plotting, ssm, wavecode, wavesim
from .config import RunConfig, load_config
from .errors import IoError, NoWaveDetected, ParseError, WaveFieldError


def _out_dir(args, command) -> Path:
    out = Path(args.out) if args.out else Path("out") / command
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _resolve(args, command) -> RunConfig:
    cfg = load_config(args.config) if args.config else load_config()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    run = {"command": command, "version": __version__}
    if getattr(args, "format", None):
        run["format"] = args.format
    cfg.run = run
    return cfg


def _input_path(args, cfg_file_run: dict, out: Path, name: str) -> Path:
    """Positional input, else the copy referenced by a manifest's [run] section."""
    if getattr(args, "input", None):
        return Path(args.input)
    if cfg_file_run.get("input"):
        path = Path(cfg_file_run["input"])
        # relative inputs live next to the manifest that names them
        return path if path.is_absolute() else Path(args.config).parent / path
    raise ParseError(f"no {name} given on the command line or in the manifest", field="input")


def _write_manifest(cfg: RunConfig, out: Path) -> None:
    cfg.write(out / "manifest.ini")


def _csv(path: Path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _prior_run(args) -> dict:
    return load_config(args.config).run if args.config else {}


# ---------------------------------------------------------------- commands


def cmd_simulate(args):
    prior = _prior_run(args)
    cfg = _resolve(args, "simulate")
    out = _out_dir(args, "simulate")
    src = _input_path(args, prior, out, "protocol file")
    protocol = formats.parse_protocol_file(src)
    local = out / "protocol.csv"
    if src.resolve() != local.resolve():
        shutil.copyfile(src, local)
    cfg.run["input"] = local.name
    fmt = args.format or cfg.run.get("format") or prior.get("format") or "raw_f32"
    cfg.run["format"] = fmt
    net = wavesim.build_network(cfg.lattice(), cfg.kernel(), cfg.neuron(), cfg.dt, cfg.seed)
    rec = wavesim.run_protocol(net, protocol, cfg["sim"]["steps"])
    name = "recording.f32" if fmt == "raw_f32" else "recording.csv"
    formats.write_recording(rec, out / name, fmt)
    rows = []
    window = int(round(50.0 / cfg.dt))
    onsets = sorted(ev.onset for ev in protocol)
    for i, ev in enumerate(protocol):
        later = [o for o in onsets if o > ev.onset]
        gap = (later[0] - ev.onset) if later else None
        try:
            speed = wavesim.measure_wave_speed(rec, ev, gap)
        except NoWaveDetected:
            speed = float("nan")
        part = (wavesim.participation_fraction(rec, (ev.onset, ev.onset + window))
                if rec.raster is not None else float("nan"))
        rows.append((i, ev.position[0], ev.position[1], ev.onset, float(speed), float(part)))
    _csv(out / "summary.csv", ["event", "x", "y", "onset", "speed_mm_per_ms", "participation_50ms"], rows)
    _write_manifest(cfg, out)
    return out


def cmd_decode(args):
    prior = _prior_run(args)
    cfg = _resolve(args, "decode")
    out = _out_dir(args, "decode")
    src = _input_path(args, prior, out, "recording")
    cfg.run["input"] = str(src.resolve())
    lat, neuron = cfg.lattice(), cfg.neuron()
    rec = formats.read_recording(src, lattice=lat, neuron=neuron, dt=cfg.dt)
    d = cfg["decode"]
    step = d["step"] if d["step"] >= 0 else rec.n_steps + d["step"]
    snap = rec.snapshot(step)
    if d["mode"] == "single":
        events = [wavecode.decode_single(snap, lat, lat.conduction_velocity)]
    else:
        bank = wavecode.TemplateBank.build(lat, cfg.kernel(), neuron, cfg.dt, d["horizon"],
                                           cfg["task"]["amplitude"])
        events = wavecode.decode_sequence(snap, bank, d["max_events"], d["floor"])
    _csv(out / "events.csv", ["x", "y", "onset", "confidence"],
         [(float(e.position[0]), float(e.position[1]), float(e.onset), float(e.confidence))
          for e in events])
    _write_manifest(cfg, out)
    return out


def _ssm_spec(cfg) -> ssm.CirculantSpec:
    spec = ssm.make_mexican_hat_circulant(cfg["ssm"]["nodes"], cfg.ssm_kernel())
    return spec.with_zero_row_sum() if cfg["ssm"]["zero_row_sum"] else spec


def cmd_spectrum(args):
    cfg = _resolve(args, "spectrum")
    out = _out_dir(args, "spectrum")
    spec = _ssm_spec(cfg)
    lam, modes = ssm.eigenmodes(spec)
    A = spec.dense()
    resid = np.linalg.norm(A @ modes - modes * lam[None, :], axis=0)
    _csv(out / "spectrum.csv", ["k", "real", "imag", "abs", "residual"],
         [(k, float(l.real), float(l.imag), float(abs(l)), float(r))
          for k, (l, r) in enumerate(zip(lam, resid))])
    _csv(out / "first_row.csv", ["j", "c"], [(j, float(c)) for j, c in enumerate(spec.c)])
    plotting.plot_spectrum(lam, out / "spectrum.png")
    _write_manifest(cfg, out)
    return out


def cmd_ssm_run(args):
    cfg = _resolve(args, "ssm-run")
    out = _out_dir(args, "ssm-run")
    s = cfg["ssm"]
    spec = _ssm_spec(cfg)
    n, T = s["nodes"], s["steps"]
    model = ssm.StateSpaceModel(spec, np.eye(n), np.eye(n), np.zeros((n, n)), s["dt"])
    report = model.stability_report() if spec.c.size else {}
    u = np.zeros((T, n))
    x0 = None
    if s["input"] == "impulse":
        x0 = np.zeros(n)
        x0[0] = 1.0
    elif s["input"] == "step":
        u[:, 0] = 1.0
    elif s["input"] == "noise":
        u = np.random.default_rng(cfg.seed).standard_normal((T, n))
    else:
        raise ParseError(f"unknown ssm input {s['input']!r}", field="ssm.input")
    y = ssm.simulate_ssm(model, u, s["method"], x0=x0)
    _csv(out / "outputs.csv", ["t"] + [f"y{i}" for i in range(n)],
         [[t] + [float(v) for v in row] for t, row in enumerate(y)])
    _csv(out / "stability.csv", list(report), [[float(v) if not isinstance(v, bool) else v
                                                for v in report.values()]])
    plotting.plot_spacetime(y, out / "spacetime.png", dt=s["dt"], xlabel="node")
    _write_manifest(cfg, out)
    return out


def cmd_attn_run(args):
    cfg = _resolve(args, "attn-run")
    out = _out_dir(args, "attn-run")
    a = cfg["attention"]
    params = attention.init_params(a["d_model"], a["n_heads"], a["d_ff"], a["n_layers"], a["param_seed"])
    rng = np.random.default_rng([cfg.seed, 7])
    seq = attention.TokenSequence(rng.standard_normal((a["length"], a["d_model"])), a["positional"])
    enc = attention.encode_sequence(seq, a["n_layers"], params, a["pooling"])
    _, maps = attention.multi_head_attention(seq.inputs(), params.layers[0], return_weights=True)
    _csv(out / "encoding.csv", ["dim", "value"], [(i, float(v)) for i, v in enumerate(enc)])
    rows = [(h, i, j, float(m[i, j])) for h, m in enumerate(maps)
            for i in range(m.shape[0]) for j in range(m.shape[1])]
    _csv(out / "attention.csv", ["head", "query", "key", "weight"], rows)
    _write_manifest(cfg, out)
    return out


def cmd_bench(args):
    cfg = _resolve(args, "bench")
    out = _out_dir(args, "bench")
    task = cfg.task()
    bc = cfg.bench_config()
    reports = []
    for enc in cfg.encoders():
        reports.append(bench.evaluate_encoder(enc, task, bc))
        if enc == "wave" and bc.wave_features == "potential" and bc.neuron.variant is wavesim.Variant.SPIKING:
            reports.append(bench.evaluate_encoder(enc, task, bc, kind="spike_count"))
    header = ["encoder", "features", "n_classes", "feature_dim", "accuracy", "se", "se_null",
              "se_seeds", "chance", "z_above_chance"]
    _csv(out / "report.csv", header,
         [(r.encoder, r.features or "-", r.n_classes, r.feature_dim, r.accuracy, r.se, r.se_null,
           r.se_seeds, r.chance, r.z_above_chance) for r in reports])
    payload = {"task": {"rule": task.rule.value, "n_classes": task.n_classes,
                        "snapshot_step": task.snapshot_step},
               "config": bc.to_dict(), "reports": [r.to_dict() for r in reports]}
    plotting.plot_reports(reports, out / "report.png")
    lags = cfg.memory_lags()
    if lags:
        curves = [bench.memory_horizon(enc, task, lags, bc) for enc in cfg.encoders()]
        rows = [(c.encoder, j, a, e) for c in curves for j, a, e in zip(c.lags, c.accuracies, c.se)]
        _csv(out / "memory.csv", ["encoder", "lag", "accuracy", "se"], rows)
        payload["memory"] = [c.to_dict() for c in curves]
        plotting.plot_memory(curves, out / "memory.png")
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True, default=float))
    _write_manifest(cfg, out)
    return out


def cmd_render(args):
    prior = _prior_run(args)
    cfg = _resolve(args, "render")
    out = _out_dir(args, "render")
    src = _input_path(args, prior, out, "recording")
    cfg.run["input"] = str(src.resolve())
    rec = formats.read_recording(src, dt=cfg.dt)
    formats.render_frames(rec, out / "frames")
    _write_manifest(cfg, out)
    return out


COMMANDS = {
    "simulate": (cmd_simulate, "protocol file -> recording"),
    "decode": (cmd_decode, "recording -> decoded events"),
    "spectrum": (cmd_spectrum, "circulant spec -> eigenmode report"),
    "ssm-run": (cmd_ssm_run, "run the circulant state-space model"),
    "attn-run": (cmd_attn_run, "encode a random token sequence with the toy transformer"),
    "bench": (cmd_bench, "task -> encoding report"),
    "render": (cmd_render, "recording -> PGM frames"),
}
_NEEDS_INPUT = {"simulate", "decode", "render"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavefield", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_)
        if name in _NEEDS_INPUT:
            sp.add_argument("input", nargs="?", help="input file (defaults to the manifest's)")
        sp.add_argument("--config", help="INI config or a previous run's manifest.ini")
        sp.add_argument("--seed", type=int, help="override all seeds")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--format", choices=["raw_f32", "csv_frames"], help="recording format")
    rr = sub.add_parser("rerun", help="replay the command recorded in a manifest")
    rr.add_argument("manifest")
    rr.add_argument("--out", help="output directory")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rerun":
            run = load_config(args.manifest).run
            command = run.get("command")
            if command not in COMMANDS:
                raise ParseError(f"manifest names no known command ({command!r})", field="run.command",
                                 path=args.manifest)
            args = argparse.Namespace(command=command, config=args.manifest, seed=None,
                                      out=args.out, format=run.get("format"), input=None)
        out = COMMANDS[args.command][0](args)
    except WaveFieldError as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        for key in ("line", "field"):
            if getattr(exc, key, None) is not None:
                err[key] = getattr(exc, key)
        print(json.dumps(err), file=sys.stderr)
        return 2 if isinstance(exc, ParseError) else 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
