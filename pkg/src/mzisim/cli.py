"""Command-line entry point.

One binary, six verbs:

    mzisim decompose --target W.txt --arch clements -o prog.txt
    mzisim mvm --program prog.txt --input x.txt [--imperfections cfg] [--detector coherent|direct]
    mzisim gemm --a A.txt --b B.txt --mode tdm|wdm --channels K
    mzisim sweep --archs clements,fldzhyan --n 8 --grid "phase_sigma=0,0.1" --trials 50 -o out.csv
    mzisim device run --script host.txt --config run.ini -o outdir
    mzisim faults campaign --script host.txt --faults list.txt -o out.csv

Global flags: --config (INI, strict schema), --seed (overrides the config
seed). Every report starts with a header carrying the tool version, the
config digest, and the seed. Exit codes: 0 success, 1 runtime failure,
2 bad arguments or unparseable input files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .clements import decompose_clements
from .config import ConfigError, RunConfig, default_config, load_config, parse_config
from .device import AcceleratorDevice, ScriptError, matrix_to_words, parse_script
from .faults import FaultFileError, campaign_csv, parse_fault_file, random_faults, run_campaign
from .fitting import FitConfig, fit_phases
from .linalg import fidelity, read_matrix, read_vector, write_matrix, write_vector
from .mesh import build_topology, forward_matrix, read_program, read_topology, write_program
from .mvm import DetectorConfig, GemmPlan, encode_vector, run_gemm, run_mvm
from .robustness import AXIS_NAMES, ImperfectionSpec, SweepGrid, compare_architectures, sample_imperfections, sweep_csv


class _InputError(Exception):
    """Unparseable or missing input file; maps to exit code 2."""


def _header(cfg: RunConfig, seed: int) -> str:
    return f"# mzisim {__version__} config={cfg.digest} seed={seed}"


def _input(reader, path: str):
    """Call a path-taking reader, mapping failures to the usage exit code."""
    try:
        return reader(path)
    except OSError as exc:
        raise _InputError(f"cannot read {path}: {exc}") from None
    except (ValueError, ScriptError, FaultFileError, ConfigError) as exc:
        raise _InputError(f"cannot parse {path}: {exc}") from None


def _input_text(parser, path: str):
    """Read a file and run a text parser over it, same exit mapping."""
    return _input(lambda p: parser(open(p, encoding="utf-8").read()), path)


# --- subcommands -------------------------------------------------------------


def cmd_decompose(args, cfg: RunConfig, seed: int) -> int:
    u = _input(read_matrix, args.target)
    arch = args.arch or cfg.arch
    topology = build_topology(arch, u.shape[0])
    if arch == "clements":
        program = decompose_clements(u)
        residual = 0.0
    else:
        program, residual = fit_phases(topology, u, FitConfig(seed=(seed, 1)))
    realized = forward_matrix(topology, program)
    print(f"arch={arch} n={topology.n_ports} cells={len(topology.placements)} layers={topology.n_layers}")
    print(f"fidelity={fidelity(realized, u):.12g} residual={residual:.6g}")
    if args.out:
        write_program(args.out, program, arch, topology.n_ports)
        print(f"wrote {args.out}")
    return 0


def cmd_mvm(args, cfg: RunConfig, seed: int) -> int:
    program, arch_tag, n_ports = _input(read_program, args.program)
    if args.topology:
        topology = _input(read_topology, args.topology)
        if topology.n_ports != n_ports:
            raise _InputError(f"topology has {topology.n_ports} ports, program expects {n_ports}")
    elif arch_tag == "custom":
        raise _InputError("program with arch_tag custom needs --topology")
    else:
        topology = build_topology(arch_tag, n_ports)
    x = _input(read_vector, args.input)
    imp = None
    if args.imperfections:
        icfg = _input_text(parse_config, args.imperfections)
        imp = sample_imperfections(icfg.imperfections, topology, (seed, 11))
    det = DetectorConfig(mode=args.detector)
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    frame = encode_vector(x, max(1.0, peak))
    y = run_mvm(topology, program, frame, imp=imp, det=det)[0]
    for i, v in enumerate(y):
        if args.detector == "direct":
            print(f"y[{i}] = {v.real:.10g}")
        else:
            print(f"y[{i}] = {v.real:.10g} {v.imag:+.10g}j")
    if args.out:
        write_vector(args.out, np.asarray(y, dtype=complex))
        print(f"wrote {args.out}")
    return 0


def cmd_gemm(args, cfg: RunConfig, seed: int) -> int:
    a = _input(read_matrix, args.a)
    b = _input(read_matrix, args.b)
    channels = args.channels if args.mode == "wdm" else 1
    plan = GemmPlan(mode=args.mode, channels=channels, check_oracle=True)
    result, report = run_gemm(a, b, plan)
    print(f"rows={report.rows} cols={report.cols} mode={report.mode} channels={report.channels}")
    print(f"slots={report.slots} programming_events={report.programming_events}")
    print(f"max_rel_err={report.max_rel_err:.6g} mean_rel_err={report.mean_rel_err:.6g}")
    if args.out:
        write_matrix(args.out, result)
        print(f"wrote {args.out}")
    return 0


def _parse_grid(text: str) -> dict:
    axes: dict[str, list] = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise _InputError(f"grid axis {part!r} needs name=v1,v2,...")
        name, _, vals = part.partition("=")
        name = name.strip()
        if name not in AXIS_NAMES:
            raise _InputError(f"unknown grid axis {name!r}; choose from {AXIS_NAMES}")
        try:
            if name == "pcm_levels":
                axes[name] = [int(v) for v in vals.split(",")]
            else:
                axes[name] = [float(v) for v in vals.split(",")]
        except ValueError:
            raise _InputError(f"bad values for grid axis {name!r}: {vals!r}") from None
    if not axes:
        raise _InputError("empty sweep grid")
    return axes


def cmd_sweep(args, cfg: RunConfig, seed: int) -> int:
    archs = [a.strip() for a in args.archs.split(",") if a.strip()]
    for a in archs:
        if a not in ("clements", "fldzhyan"):
            raise _InputError(f"unknown architecture {a!r}")
    grid = SweepGrid(axes=_parse_grid(args.grid), trials_per_point=args.trials, base_seed=seed)
    rows = compare_architectures(archs, args.n, grid, base_spec=cfg.imperfections,
                                 fit_cfg=FitConfig(seed=(seed, 2)), jobs=args.jobs)
    meta = f"mzisim {__version__} config={cfg.digest} seed={seed}"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(sweep_csv(rows, meta=meta))
        print(f"wrote {args.out} ({len(rows)} rows)")
    else:
        sys.stdout.write(sweep_csv(rows))  # the run header above already labels stdout
    return 0


def _build_host_image(cfg: RunConfig) -> bytes | None:
    if not cfg.weights_file and not cfg.input_file:
        return None
    chunks = []
    if cfg.weights_file:
        w = _input(read_matrix, cfg.weights_file)
        chunks.append((cfg.host_weights_addr, matrix_to_words(w)))
    if cfg.input_file:
        x = _input(read_matrix, cfg.input_file)  # columns are the input vectors
        chunks.append((cfg.host_input_addr, matrix_to_words(x.T)))
    end = max(addr + 4 * words.size for addr, words in chunks)
    img = bytearray(end)
    for addr, words in chunks:
        img[addr:addr + 4 * words.size] = words.astype("<u4").tobytes()
    return bytes(img)


def cmd_device_run(args, cfg: RunConfig, seed: int) -> int:
    script = _input_text(parse_script, args.script)
    host_image = _build_host_image(cfg)
    dev = AcceleratorDevice(cfg.timing, cfg.device_models())
    res = dev.run(script, host_image)
    summary = {
        "tool": f"mzisim {__version__}",
        "config_digest": cfg.digest,
        "seed": seed,
        "total_time_ps": res.total_time_ps,
        "hang": res.hang,
        "error": res.error,
        "trace_events": len(res.trace.events),
        "trace_digest": res.trace.digest(),
        "energy": res.energy.as_dict(),
    }
    for key in ("total_time_ps", "hang", "error", "trace_digest"):
        print(f"{key}={summary[key]}")
    for key, val in res.energy.as_dict().items():
        print(f"energy.{key}={val:.6g}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "trace.jsonl"), "w", encoding="utf-8") as fh:
            fh.write(res.trace.to_jsonl())
        with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(args.out, "spm.bin"), "wb") as fh:
            fh.write(res.spm_image)
        with open(os.path.join(args.out, "host.bin"), "wb") as fh:
            fh.write(res.host_image)
        print(f"wrote {args.out}/")
    return 0


def cmd_faults_campaign(args, cfg: RunConfig, seed: int) -> int:
    script = _input_text(parse_script, args.script)
    host_image = _build_host_image(cfg)
    models = cfg.device_models()
    gold = AcceleratorDevice(cfg.timing, models).run(script, host_image)
    if gold.hang:
        raise RuntimeError("gold run hangs; fix the script before a campaign")
    d2h = [e for e in gold.trace.events if e["kind"] == "dma" and e["detail"]["dir"] == "d2h"]
    if not d2h:
        raise RuntimeError("script has no d2h DMA; campaign needs a result readback to classify")
    last = d2h[-1]["detail"]
    region = (last["dst"], last["bytes"] // 4)
    computes = [e["detail"] for e in gold.trace.events if e["kind"] == "compute"]
    if args.faults:
        specs = _input_text(parse_fault_file, args.faults)
    else:
        n = computes[-1]["n"] if computes else 8
        dev = AcceleratorDevice(cfg.timing, models)
        specs = random_faults(args.random, seed, n_ports=n, cells=n * (n - 1) // 2,
                              num_levels=cfg.material.num_levels, spm_words=dev.spm_words,
                              t_hi=max(1, gold.total_time_ps))
    result = run_campaign(script, specs, region, cfg.timing, models, host_image, jobs=args.jobs)
    if args.out:
        meta = f"mzisim {__version__} config={cfg.digest} seed={seed}"
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(campaign_csv(result, meta=meta))
        print(f"wrote {args.out} ({len(result.rows)} rows)")
    else:
        sys.stdout.write(campaign_csv(result))
    for name, count in result.histogram.items():
        print(f"{name}={count}")
    return 0


# --- parser ------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="mzisim", description=__doc__.splitlines()[0])
    top.add_argument("--config", help="INI run configuration")
    top.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="program a mesh for a target matrix")
    p.add_argument("--target", required=True, help="target matrix file")
    p.add_argument("--arch", choices=("clements", "fldzhyan"), default=None)
    p.add_argument("-o", "--out", help="write the phase program here")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("mvm", help="one vector through a programmed mesh")
    p.add_argument("--program", required=True, help="phase program file")
    p.add_argument("--input", required=True, help="input vector file")
    p.add_argument("--topology", help="topology file for programs with arch_tag custom")
    p.add_argument("--imperfections", help="config whose [imperfections] section is sampled")
    p.add_argument("--detector", choices=("coherent", "direct"), default="coherent")
    p.add_argument("-o", "--out", help="write the output vector here")
    p.set_defaults(func=cmd_mvm)

    p = sub.add_parser("gemm", help="matrix-matrix product via TDM or WDM")
    p.add_argument("--a", required=True, help="left matrix file (square)")
    p.add_argument("--b", required=True, help="right matrix file")
    p.add_argument("--mode", choices=("tdm", "wdm"), default="tdm")
    p.add_argument("--channels", type=int, default=1, help="wavelength channels for wdm")
    p.add_argument("-o", "--out", help="write the result matrix here")
    p.set_defaults(func=cmd_gemm)

    p = sub.add_parser("sweep", help="Monte Carlo robustness sweep to CSV")
    p.add_argument("--archs", required=True, help="comma list: clements,fldzhyan")
    p.add_argument("--n", type=int, required=True, help="port count")
    p.add_argument("--grid", required=True, help="axis=v1,v2;axis2=... over " + ",".join(AXIS_NAMES))
    p.add_argument("--trials", type=int, required=True, help="Monte Carlo trials per grid point")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("-o", "--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_sweep)

    dev = sub.add_parser("device", help="memory-mapped device model")
    dsub = dev.add_subparsers(dest="device_command", required=True)
    p = dsub.add_parser("run", help="execute a host script against the device")
    p.add_argument("--script", required=True, help="host transaction script")
    p.add_argument("-o", "--out", help="directory for trace.jsonl, summary.json, memory dumps")
    p.set_defaults(func=cmd_device_run)

    flt = sub.add_parser("faults", help="fault-injection campaigns")
    fsub = flt.add_subparsers(dest="faults_command", required=True)
    p = fsub.add_parser("campaign", help="run a fault list against a gold run")
    p.add_argument("--script", required=True, help="host transaction script")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--faults", help="fault list file")
    group.add_argument("--random", type=int, help="generate this many seeded random faults")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("-o", "--out", help="write campaign CSV here instead of stdout")
    p.set_defaults(func=cmd_faults_campaign)

    return top


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config) if args.config else default_config()
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    seed = args.seed if args.seed is not None else cfg.seed
    print(_header(cfg, seed))
    try:
        return args.func(args, cfg, seed)
    except _InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
