"""Command-line driver: simulate, analyze, seq check|format|expand, version.

Exit codes: 0 ok, 1 validation error, 2 runtime error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from . import io as dio
from . import seqlang
from .spinsys import FreeHamiltonianKind
from .protocols import (
    AcquisitionGrid,
    CpParams,
    Signal,
    Signal2D,
    add_shot_noise,
    apply_envelopes,
    fid_protocol,
    multipulse_decay,
    multipulse_sweep,
    protocol_2d,
)
from .spectra import (
    FitError,
    IsotopeMatch,
    Peak,
    PeakAssignment,
    Spectrum,
    assign_isotope,
    classify_harmonic,
    find_peaks,
    find_peaks_2d,
    fit_frequency,
    transform,
    transform_2d,
    unalias,
)

log = logging.getLogger("nvnmr")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3


class ValidationError(ValueError):
    pass


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# --------------------------------------------------------------------------
# simulate


def _grid(g):
    return AcquisitionGrid(float(g["start"]), float(g["dwell"]), int(g["count"]))


def _resolve_tau(value, system, index):
    return system.resonant_tau(index) if value == "auto" else float(value)


def _sweep(system, grid, proto, threads):
    """Multipulse tau sweep, optionally split over threads; order is preserved."""
    taus = grid.times
    n = proto["n_pulses"]
    args = (n, proto["phase_pattern"], proto["pulse_duration"])
    if threads <= 1 or len(taus) < 2 * threads:
        return multipulse_sweep(system, grid, *args)
    chunks = [c for c in np.array_split(np.arange(len(taus)), threads) if len(c)]

    def run(idx):
        g = AcquisitionGrid(float(taus[idx[0]]), grid.dwell, len(idx))
        return multipulse_sweep(system, g, *args).values

    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(run, chunks))
    sig = multipulse_sweep(system, AcquisitionGrid(grid.start, grid.dwell, 1), *args)
    p = np.concatenate(parts)
    return Signal(grid, p, p - 0.5, np.zeros_like(p), False, dict(sig.metadata))


def simulate_signals(cfg, seed=None, threads=1):
    """Run the configured protocol; returns a list of Signal / Signal2D."""
    system = cfgmod.build_system(cfg)
    proto = cfg["protocol"]
    kind = proto["kind"]
    out = []
    if kind == "multipulse":
        for g in proto["grids"]:
            grid = _grid(g)
            sig = _sweep(system, grid, proto, threads)
            if proto["envelopes"]:
                sig = apply_envelopes(sig, system, times=proto["n_pulses"] * grid.times)
            out.append(sig)
    else:
        tau = _resolve_tau(proto["tau"], system, proto["tau_nucleus"])
        cp = CpParams(proto["n_pulses"], tau, proto["phase_pattern"], proto["pulse_duration"])
        tau3 = _resolve_tau(proto["tau3"], system, proto["tau_nucleus"]) if system.nuclei else tau
        for g in proto["grids"]:
            grid = _grid(g)
            if kind == "multipulse_decay":
                sig = multipulse_decay(system, cp, grid)
            elif kind == "fid":
                free = FreeHamiltonianKind(proto["free"], tau3 if proto["free"] == "H3" else None)
                sig = fid_protocol(system, cp, free, grid, proto["phase_cycle"])
            else:
                sig = protocol_2d(system, cp, grid, _grid(proto["grid2"]), tau3, proto["phase_cycle"])
            if proto["envelopes"]:
                sig = apply_envelopes(sig, system)
            out.append(sig)
    noise = proto["noise"]
    if noise["enabled"]:
        s = noise["seed"] if seed is None else seed
        out = [
            add_shot_noise(sig, noise["photons_per_readout"], noise["contrast"],
                           noise["averages"], s + i)
            for i, sig in enumerate(out)
        ]
    return out


def _outputs(n, prefix, out_dir, stem):
    if n == 1:
        return [out_dir / f"{prefix}_{stem}.csv"]
    return [out_dir / f"{prefix}_{stem}_{i}.csv" for i in range(n)]


def _load_config(path, seed):
    cfg = cfgmod.load(path)
    noise = cfg["protocol"]["noise"]
    if seed is not None:
        noise["seed"] = seed
    return cfg


def cmd_simulate(args):
    cfg = _load_config(args.config, args.seed)
    out_dir = Path(args.out or cfg["output"]["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = cfg["output"]["prefix"]
    seed = cfg["protocol"]["noise"]["seed"]
    manifest = dio.RunManifest(dio.config_hash(cfg), seed, __version__, "simulate", started=_now())
    signals = simulate_signals(cfg, threads=args.threads)
    extra = {"b0_t": cfg["system"]["b0"]}
    for path, sig in zip(_outputs(len(signals), prefix, out_dir, "signal"), signals):
        dio.write_signal(path, sig, manifest.run_id, extra)
        manifest.add(path)
        print(path)
    manifest.finished = _now()
    manifest.write(out_dir / f"{prefix}_manifest.json")
    return EXIT_OK


# --------------------------------------------------------------------------
# analyze


def _span(sig):
    return sig.grid.dwell * sig.grid.count


def _alias_tol(spectra, analysis):
    if analysis["alias_tol"] > 0:
        return analysis["alias_tol"]
    # two raw (unpadded) bins of the coarsest record
    return max(2.0 / (s.n_samples * s.dwell) for s in spectra)


def _resolve(primary_idx, spectra, peaks, band, tol):
    """True frequencies for the primary record's peaks, using the other records."""
    ps = spectra[primary_idx]
    cand_sets = [
        [c for pk in peaks[i] for c in unalias(pk.freq, s.dwell, band)]
        for i, s in enumerate(spectra)
    ]
    resolved = []
    others = [i for i in range(len(spectra)) if i != primary_idx]
    for pk in peaks[primary_idx]:
        scored = []
        for c in unalias(pk.freq, ps.dwell, band):
            # worst distance to the nearest candidate of every other record
            dist = max((min((abs(c - o) for o in cand_sets[i]), default=math.inf) for i in others),
                       default=0.0)
            if dist <= tol:
                scored.append((dist, c))
        resolved.append(min(scored)[1] if scored else pk.freq)
    return resolved


def _nmr_references(cfg):
    analysis = cfg["analysis"]
    if analysis["nmr_reference"]:
        return [(float(f), None) for f in analysis["nmr_reference"]]
    system = cfgmod.build_system(cfg)
    return [(system.center_frequency_hz(i), n.isotope.name) for i, n in enumerate(system.nuclei)]


def analyze_multipulse(sig, cfg):
    """Dips of a tau sweep as peaks in filter frequency 1/(2 tau)."""
    analysis = cfg["analysis"]
    tau = sig.t
    if np.any(tau <= 0):
        raise ValidationError("multipulse sweep needs tau > 0")
    f = 1 / (2 * tau[::-1])
    depth = 1 - np.asarray(sig.values)[::-1]
    depth = np.clip(depth - np.median(depth), 0.0, None)  # pulse-error baseline
    spec = Spectrum(f, depth.astype(complex), dwell=math.nan, n_samples=len(f), nfft=len(f))
    peaks = find_peaks(spec, threshold=analysis["threshold"]) if np.max(depth) > 0 else []
    refs = _nmr_references(cfg)
    b0 = cfg["system"]["b0"]
    out = []
    for pk in peaks:
        harm, iso = None, None
        for f_nmr, name in refs:
            h = classify_harmonic(pk.freq, f_nmr, analysis["harmonic_tol"])
            if h is not None:
                harm = h
                iso = name
                if iso is None:
                    hits = assign_isotope(f_nmr, b0, analysis["assign_tol"])
                    iso = hits[0].isotope if hits else None
                break
        isos = () if iso is None else (IsotopeMatch(iso, "multipulse reference", f_nmr, 0.0),)
        out.append(PeakAssignment(pk, isos, harm))
    return spec, out


def analyze_fid(signals, cfg):
    analysis = cfg["analysis"]
    spectra, peaks = [], []
    for sig in signals:
        spec = transform(sig, analysis["window"], analysis["zero_pad"], analysis["remove_dc"])
        spectra.append(spec)
        peaks.append(find_peaks(spec, threshold=analysis["threshold"]))
    primary = max(range(len(signals)), key=lambda i: _span(signals[i]))
    freqs = [pk.freq for pk in peaks[primary]]
    if analysis["band"] is not None and freqs:
        freqs = _resolve(primary, spectra, peaks, tuple(analysis["band"]), _alias_tol(spectra, analysis))
    final = list(peaks[primary])
    if analysis["fit"] and freqs:
        try:
            fitted = fit_frequency(signals[primary], freqs, decay=analysis["fit_decay"])
            final = sorted(fitted, key=lambda p: p.freq)
        except FitError as exc:
            log.warning("fit failed (%s); reporting spectral peak positions", exc)
            final = [Peak(f, p.amplitude, p.width, p.fit_uncertainty) for f, p in zip(freqs, final)]
    else:
        final = [Peak(f, p.amplitude, p.width, p.fit_uncertainty) for f, p in zip(freqs, final)]
    b0 = cfg["system"]["b0"]
    out = [PeakAssignment(p, assign_isotope(p.freq, b0, analysis["assign_tol"])) for p in final]
    return spectra, out


def cmd_analyze(args):
    cfg = _load_config(args.config, args.seed)
    signals = [dio.read_signal(p) for p in args.signals]
    out_dir = Path(args.out or cfg["output"]["dir"])
    prefix = cfg["output"]["prefix"]
    manifest = dio.RunManifest(dio.config_hash({"config": cfg, "inputs": [dio.sha256_file(p) for p in args.signals]}),
                               cfg["protocol"]["noise"]["seed"], __version__, "analyze", started=_now())
    rid = manifest.run_id
    # compute everything first so a failure leaves no partial output
    writes = []
    if any(isinstance(s, Signal2D) for s in signals):
        if len(signals) != 1:
            raise ValidationError("2D analysis takes exactly one signal file")
        a = cfg["analysis"]
        spec = transform_2d(signals[0], (a["window"], a["window"]), (a["zero_pad"], a["zero_pad"]))
        pk = find_peaks_2d(spec, a["threshold"])
        writes.append((f"{prefix}_spectrum2d.csv", dio.write_spectrum_2d, spec))
        writes.append((f"{prefix}_peaks2d.csv", dio.write_peaks_2d, pk))
    elif any(s.metadata.get("axis") == "tau" for s in signals):
        for i, sig in enumerate(signals):
            spec, assigned = analyze_multipulse(sig, cfg)
            sfx = "" if len(signals) == 1 else f"_{i}"
            writes.append((f"{prefix}_dips{sfx}.csv", dio.write_spectrum, spec))
            writes.append((f"{prefix}_peaks{sfx}.csv", dio.write_peaks, assigned))
    else:
        spectra, assigned = analyze_fid(signals, cfg)
        names = [p.name for p in _outputs(len(spectra), prefix, Path("."), "spectrum")]
        for name, spec in zip(names, spectra):
            writes.append((name, dio.write_spectrum, spec))
        writes.append((f"{prefix}_peaks.csv", dio.write_peaks, assigned))
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, fn, obj in writes:
        path = fn(out_dir / name, obj, rid)
        manifest.add(path)
        print(path)
    manifest.finished = _now()
    manifest.write(out_dir / f"{prefix}_analyze_manifest.json")
    return EXIT_OK


# --------------------------------------------------------------------------
# seq


def _seq_source(name):
    p = Path(name)
    if p.exists():
        return p.read_text(), str(p)
    if name in seqlang.LIBRARY:
        return seqlang.library_source(name), f"<library:{name}>"
    raise FileNotFoundError(f"no such sequence file: {name}")


def _parse_args_kv(prog, items):
    types = {p.name: p.type for p in prog.params}
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ValidationError(f"--arg expects name=value, got {item!r}")
        if key not in types:
            raise ValidationError(f"{prog.name} has no parameter {key!r}")
        out[key] = seqlang.parse_value(val, types[key])
    return out


def cmd_seq(args):
    if args.action == "check":
        names = args.files or list(seqlang.LIBRARY)
        bad = 0
        for name in names:
            text, label = _seq_source(name)
            try:
                prog = seqlang.parse(text)
                print(f"{label}: ok ({prog.name}, {len(prog.body)} statements)")
            except seqlang.SeqError as exc:
                print(f"{label}:{exc}", file=sys.stderr)
                bad += 1
        return EXIT_VALIDATION if bad else EXIT_OK
    if len(args.files) != 1:
        raise ValidationError(f"seq {args.action} takes exactly one file")
    text, label = _seq_source(args.files[0])
    try:
        prog = seqlang.parse(text)
    except seqlang.SeqError as exc:
        raise seqlang.SeqError(f"{label}: {exc.message}", exc.line, exc.col) from None
    if args.action == "format":
        sys.stdout.write(seqlang.format_program(prog))
        return EXIT_OK
    seq = seqlang.bind_and_expand(prog, _parse_args_kv(prog, args.arg))
    rows = seqlang.schedule(seq)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        fh.write(f"# sequence: {prog.name}\n")
        fh.write("# units: t_start: s, angle: deg, phase: deg, duration: s\n")
        fh.write(f"# total_duration_s: {seq.duration!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_start", "kind", "angle", "phase", "duration"])
        for t, kind, angle, phase, dur in rows:
            w.writerow([repr(t), kind, repr(math.degrees(angle)), repr(math.degrees(phase)), repr(dur)])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_version(args):
    print(f"nvnmr {__version__}")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(prog="nvnmr", description="NV-center nanoscale NMR simulation and analysis")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--seed", type=int, help="noise seed (overrides protocol.noise.seed)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")

    sp = sub.add_parser("simulate", help="run the configured protocol and write signal CSV")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("analyze", help="spectra, peaks and assignments from signal CSV")
    sp.add_argument("signals", nargs="+", help="signal CSV file(s); several records resolve aliases")
    common(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("seq", help="check, format or expand pulse-sequence programs")
    sp.add_argument("action", choices=("check", "format", "expand"))
    sp.add_argument("files", nargs="*", help=".seq files or library names (default for check: library)")
    sp.add_argument("--arg", action="append", help="parameter binding name=value, e.g. tau=121.8ns")
    sp.add_argument("--out", help="write the expanded schedule here instead of stdout")
    sp.set_defaults(func=cmd_seq)

    sp = sub.add_parser("version", help="print the tool version")
    sp.set_defaults(func=cmd_version)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except (cfgmod.ConfigError, seqlang.SeqError, dio.DataFormatError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
