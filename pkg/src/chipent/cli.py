"""
Command-line entry point.

    chipent [--config PATH] [--seed N] [--out DIR] [--duration S] [--svg] VERB ...

Verbs: spectrum, coincidence, franson, multiplex, budget, selftest, and
correlate (analyse a recorded tag file). Every data file carries the config
hash and seed; re-running with the same inputs rewrites identical bytes.

Exit codes: 0 success, 2 config/input error, 3 regime or precondition
error, 4 fit failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, config, experiment
from .correlate import build_histogram, car, metrics_record, peak_metrics, write_histogram_csv
from .errors import (ChipentError, ConfigError, EmptyHistogramError, FitError, OutOfRangeError,
                     RegimeError)
from .export import header_lines, write_json
from .franson import PHASE_PRESETS
from .source import channel_grid
from .spectral import (FlatLoss, element_attenuation, notch_transmission, passband_transmission,
                       ring_transmission, wavelength_grid, write_spectrum_csv)
from .svgplot import line_plot
from .tagio import TagFormatError, load_tags, write_tags
from .tagsim import IDLER, SIGNAL
from .units import linear_to_db

EXIT_OK, EXIT_CONFIG, EXIT_REGIME, EXIT_FIT = 0, 2, 3, 4


def _common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--config", metavar="PATH", help="experiment YAML (default: packaged reference setup)", **d)
    parser.add_argument("--seed", type=int, help="override the config seed", **d)
    parser.add_argument("--out", metavar="DIR", help="output directory (default: .)", **d)
    parser.add_argument("--duration", type=float, metavar="S",
                        help="acquisition time; per phase point for franson/multiplex", **d)
    parser.add_argument("--svg", action="store_true", help="also write SVG plots", **d)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chipent", description=__doc__.split("\n\n")[0].strip())
    _common(p, suppress=False)
    sub = p.add_subparsers(dest="verb", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _common(common, suppress=True)

    s = sub.add_parser("spectrum", parents=[common], help="spectral response of the chain")
    s.add_argument("--start", type=float)
    s.add_argument("--stop", type=float)
    s.add_argument("--step-pm", type=float)
    s.add_argument("--notch-floor", type=float, help="override the notch floor rejection (dB)")

    s = sub.add_parser("coincidence", parents=[common], help="coincidence histogram of one channel pair")
    s.add_argument("--fsr", type=int, default=2)
    s.add_argument("--save-tags", action="store_true", help="also write the detected tags (binary)")

    s = sub.add_parser("franson", parents=[common], help="Franson phase scan and fringe fit")
    s.add_argument("--fsr", type=int, default=2)
    s.add_argument("--phase-step", choices=sorted(PHASE_PRESETS))
    s.add_argument("--points", type=int, help="number of phase points (default: one full 2pi turn)")

    s = sub.add_parser("multiplex", parents=[common], help="Franson scans over all configured channels")
    s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("budget", parents=[common], help="loss budget totals")
    s.add_argument("--combine", choices=("linear", "quadrature"))

    sub.add_parser("selftest", parents=[common], help="quick internal consistency checks")

    s = sub.add_parser("correlate", parents=[common], help="histogram and metrics of a recorded tag file")
    s.add_argument("tags", help="tag file (.csv or binary)")
    return p


def _load_config(args) -> config.ExperimentConfig:
    cfg = config.load(args.config) if getattr(args, "config", None) else config.default_config()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _outdir(args) -> Path:
    out = Path(getattr(args, "out", None) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- verbs ---------------------------------------------------------------------------

def _coupler_losses(cfg) -> tuple:
    cin, cout = 5.0, 5.0
    for row in cfg.losses.rows:
        if "grating coupler" in row.name.lower():
            if row.shared is not None:
                cin = row.shared
            if row.signal is not None:
                cout = row.signal
    return cin, cout


def cmd_spectrum(cfg, args) -> int:
    sp = cfg.spectrum
    start = sp.start if args.start is None else args.start
    stop = sp.stop if args.stop is None else args.stop
    step = sp.step_pm if args.step_pm is None else args.step_pm
    notch = cfg.notch
    if args.notch_floor is not None:
        notch = replace(notch, floor_rejection=args.notch_floor)
    lam = wavelength_grid(start, stop, step)
    cin, cout = _coupler_losses(cfg)
    cols = {
        "ring_db": linear_to_db(ring_transmission(lam, cfg.ring)),
        "notch_db": notch_transmission(lam, notch),
        "coupler_in_db": element_attenuation(lam, FlatLoss(cin, "coupler in")),
        "coupler_out_db": element_attenuation(lam, FlatLoss(cout, "coupler out")),
    }
    cols["device_db"] = cols["coupler_in_db"] + cols["ring_db"] + cols["notch_db"] + cols["coupler_out_db"]
    extra = []
    lam_p = cfg.pump.wavelength
    summary = {"pump_wavelength_nm": lam_p,
               "notch_at_pump_db": float(notch_transmission(lam_p, notch))}
    if cfg.channels:
        i = cfg.channels[0]
        pair = channel_grid(cfg.pump, cfg.ring.fsr, i, cfg.ring.comb_span)
        pb_s = cfg.passband.spec_for(pair.lambda_signal, i)
        pb_i = cfg.passband.spec_for(pair.lambda_idler, i)
        cols["passband_signal_db"] = passband_transmission(lam, pb_s)
        cols["passband_idler_db"] = passband_transmission(lam, pb_i)
        cols["pump_rejection_db"] = cols["notch_db"] + cols["passband_signal_db"]
        for j in cfg.channels:
            q = channel_grid(cfg.pump, cfg.ring.fsr, j, cfg.ring.comb_span)
            extra.append(f"channel fsr={j} lambda_idler_nm={q.lambda_idler:.4f} "
                         f"lambda_signal_nm={q.lambda_signal:.4f}")
        summary.update(
            filter_channel=i,
            passband_signal_at_pump_db=float(passband_transmission(lam_p, pb_s)),
            pump_rejection_db=float(notch_transmission(lam_p, notch) + passband_transmission(lam_p, pb_s)),
        )
    out = _outdir(args)
    write_spectrum_csv(out / "spectrum.csv", lam, cols, header_lines(cfg, *extra))
    write_json(out / "spectrum_summary.json", cfg, summary)
    if getattr(args, "svg", False):
        line_plot(out / "spectrum.svg", lam, {k: -v for k, v in cols.items() if k != "device_db"},
                  "Spectral response", "wavelength (nm)", "transmission (dB)")
    print(f"wrote {len(lam)} rows to {out / 'spectrum.csv'}")
    if "pump_rejection_db" in summary:
        print(f"pump rejection (notch + bandpass) at {lam_p} nm: {summary['pump_rejection_db']:.1f} dB")
    return EXIT_OK


def cmd_coincidence(cfg, args) -> int:
    res = experiment.run_coincidence(cfg, args.fsr, duration=getattr(args, "duration", None))
    out = _outdir(args)
    stem = f"coincidence_fsr{args.fsr}"
    write_histogram_csv(out / f"{stem}_histogram.csv", res.histogram, header_lines(cfg))
    rec = experiment.coincidence_record(res)
    write_json(out / f"{stem}_metrics.json", cfg, rec)
    if args.save_tags:
        write_tags(out / f"{stem}_tags.bin", res.streams)
    if getattr(args, "svg", False):
        h = res.histogram
        line_plot(out / f"{stem}_histogram.svg", h.centers, {"counts": h.counts},
                  f"Coincidences, {args.fsr}-FSR", "delay idler - signal (ps)", "counts per bin")
    r = rec["rates"]
    if res.metrics is None:
        print(f"{args.fsr}-FSR: no coincidences recorded (low statistics)")
    else:
        print(f"{args.fsr}-FSR: {r['coincidences_per_s']:.1f} coincidences/s, "
              f"background {r['background_in_window_per_s']:.2f}/s, FWHM {rec['fwhm_ps']:.0f} ps, "
              f"SNR {rec['snr']:.1f}, CAR {rec['car']:.1f}"
              + (" [low statistics]" if res.low_statistics else ""))
    return EXIT_OK


def _phases(cfg, args):
    preset = args.phase_step or cfg.interferometer.phase_step
    step = PHASE_PRESETS[preset]
    n = args.points if args.points is not None else int(round(2 * np.pi / step))
    return np.arange(max(n, 0)) * step


def _write_fringe(path, cfg, res: experiment.FransonResult) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines(cfg):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["phase_rad", "central_counts", "side_mean_counts", "integration_s"])
        s = res.scan
        for phi, c, sm in zip(s.phases, s.central_counts, s.side_mean_counts):
            w.writerow([f"{phi:.6f}", int(c), f"{sm:g}", f"{s.integration_per_point:g}"])


def cmd_franson(cfg, args) -> int:
    phases = _phases(cfg, args)
    analysis.check_scan_span(phases)
    res = experiment.run_franson(cfg, args.fsr, phases=phases, integration=getattr(args, "duration", None))
    out = _outdir(args)
    stem = f"franson_fsr{args.fsr}"
    _write_fringe(out / f"{stem}_fringe.csv", cfg, res)
    write_histogram_csv(out / f"{stem}_histogram.csv", res.histogram, header_lines(cfg, "summed over phases"))
    rec = experiment.franson_record(res)
    write_json(out / f"{stem}_fit.json", cfg, rec)
    if getattr(args, "svg", False):
        s = res.scan
        fit = analysis._fringe_model(s.phases, res.fit.n0, res.fit.visibility, res.fit.phase_offset)
        line_plot(out / f"{stem}_fringe.svg", s.phases,
                  {"central": s.central_counts, "side mean": s.side_mean_counts, "fit": fit},
                  f"Franson fringe, {args.fsr}-FSR", "phase (rad)", "counts", markers=True)
    print(f"{args.fsr}-FSR: V_raw {100 * res.fit.visibility:.1f} +/- {100 * res.fit.visibility_stderr:.1f} %, "
          f"V_net {100 * res.visibility_net:.1f} %, R2 {res.fit.r_squared:.3f}, "
          f"Bell violation: {rec['bell_violation']}")
    return EXIT_OK


def cmd_multiplex(cfg, args) -> int:
    rows = experiment.run_multiplex(cfg, workers=args.workers, integration=getattr(args, "duration", None))
    out = _outdir(args)
    analysis.write_multiplex_csv(out / "multiplex.csv", rows, header_lines(cfg))
    write_json(out / "multiplex.json", cfg, {"rows": rows})
    ok = [r for r in rows if r["error"] is None]
    if getattr(args, "svg", False) and ok:
        line_plot(out / "multiplex.svg", [r["fsr"] for r in ok],
                  {"V_raw": [r["visibility_raw"] for r in ok], "V_net": [r["visibility_net"] for r in ok]},
                  "Visibility per channel pair", "FSR index", "visibility", markers=True)
    print(f"{'fsr':>4} {'idler nm':>9} {'signal nm':>10} {'V_raw %':>8} {'V_net %':>8} {'rate MHz':>9}")
    for r in rows:
        if r["error"]:
            print(f"{r['fsr']:>4} {r['lambda_idler_nm']:>9.1f} {r['lambda_signal_nm']:>10.1f}  error: {r['error']}")
        else:
            print(f"{r['fsr']:>4} {r['lambda_idler_nm']:>9.1f} {r['lambda_signal_nm']:>10.1f} "
                  f"{100 * r['visibility_raw']:>8.1f} {100 * r['visibility_net']:>8.1f} "
                  f"{r['internal_rate_mhz']:>9.2f}")
    return EXIT_OK


def cmd_budget(cfg, args) -> int:
    combine = args.combine or cfg.losses.uncertainty_combination
    table = cfg.losses.table
    rec = analysis.budget_record(table, combine)
    write_json(_outdir(args) / "budget.json", cfg, rec)

    def cell(v, u):
        return f"{v:g} +/- {u:g}" if v is not None else "-"

    print(f"{'component':<26} {'signal dB':>14} {'idler dB':>14} {'pump side dB':>14}")
    for r in table.rows:
        print(f"{r.name:<26} " + " ".join(f"{cell(r.value(c), r.uncertainty[c]):>14}"
                                         for c in analysis.COLUMNS))
    t = rec["totals"]
    print(f"{'Total (' + combine + ')':<26} {cell(t['signal_db'], t['signal_unc_db']):>14} "
          f"{cell(t['idler_db'], t['idler_unc_db']):>14} {cell(t['pump_side_db'], t['pump_side_unc_db']):>14}")
    return EXIT_OK


def cmd_correlate(cfg, args) -> int:
    streams = load_tags(args.tags)
    a, b = streams[SIGNAL], streams[IDLER]
    an = cfg.analysis
    duration = getattr(args, "duration", None)
    h = build_histogram(a, b, an.bin_width, an.delay_range, duration)
    m = peak_metrics(h, an.window, smooth_ps=an.fwhm_smoothing)
    rec = metrics_record(m, h, car(h, an.window, smooth_ps=an.fwhm_smoothing))
    out = _outdir(args)
    stem = Path(args.tags).stem
    write_histogram_csv(out / f"{stem}_histogram.csv", h, header_lines(cfg))
    write_json(out / f"{stem}_metrics.json", cfg, rec)
    print(f"{len(a)} signal / {len(b)} idler tags: {m.in_window_rate:.1f} coincidences/s, "
          f"FWHM {m.fwhm:.0f} ps, SNR {m.snr:.1f}")
    return EXIT_OK


def cmd_selftest(cfg, args) -> int:
    from .selftest import run_checks

    results = run_checks(cfg)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else 1


VERBS = {
    "spectrum": cmd_spectrum,
    "coincidence": cmd_coincidence,
    "franson": cmd_franson,
    "multiplex": cmd_multiplex,
    "budget": cmd_budget,
    "selftest": cmd_selftest,
    "correlate": cmd_correlate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        return VERBS[args.verb](cfg, args)
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.residuals is not None:
            print("residuals: " + " ".join(f"{r:.3g}" for r in np.ravel(exc.residuals)), file=sys.stderr)
        return EXIT_FIT
    except (RegimeError, EmptyHistogramError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except (ConfigError, OutOfRangeError, TagFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ChipentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
