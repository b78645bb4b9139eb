"""Command-line front end: classification, catalog, sweeps, fitting and robustness."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .braid_algebra import catalog, catalog_to_json, format_word
from .errors import (
    BraidTopoError,
    ConfigError,
    DegenerateSpectrum,
    GapClosed,
    GaugeAmbiguous,
    NonConvergence,
    NotQuantized,
)
from .fitting import (
    DEFAULT_GAMMA,
    SWEEP_TABLES,
    FitResult,
    ResonatorParams,
    braid_from_sweep,
    default_grid,
    fit_spectrum,
    ingest_fit_table,
    spectra_from_csv,
    sweep_table,
    synth_spectrum,
)
from .holonomy import (
    ClassificationReport,
    PathGrid,
    StrandTable,
    classify,
    eigenframe,
    robustness_study,
    strand_trajectories,
)
from .models import (
    MAIN_TEXT_K,
    TABLE_LABELS,
    FrameSpec,
    HamiltonianPath,
    ThreeBandParams,
    bloch_path,
    frame_path,
    path_from_config,
    table_s3_params,
)

EXIT_OK, EXIT_NOT_QUANTIZED, EXIT_GAP, EXIT_FIT, EXIT_CONFIG, EXIT_OTHER = 0, 2, 3, 4, 64, 1

GLOBAL_DEFAULTS = {"nq": 1024, "tol": None, "seed": 0, "workers": 1, "out": None, "format": "json"}


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings for one invocation."""

    command: str
    nq: int = 1024
    tol: float | None = None
    seed: int = 0
    workers: int = 1
    out: str | None = None
    format: str = "json"
    options: dict | None = None

    def __post_init__(self):
        if self.nq < 64:
            raise ConfigError("--nq must be at least 64")
        if self.tol is not None and self.tol <= 0:
            raise ConfigError("--tol must be positive")
        if self.workers < 1:
            raise ConfigError("--workers must be at least 1")

    def tolerance(self, default: float = 1e-2) -> float:
        """Explicit --tol, else the command's own default."""
        return default if self.tol is None else self.tol

    def opt(self, key, default=None):
        v = (self.options or {}).get(key)
        return default if v is None else v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_globals(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="JSON file with option values; flags win")
    g.add_argument("--nq", type=int, help="grid intervals (default 1024)")
    g.add_argument("--tol", type=float, help="quantization tolerance (default 1e-2; 0.1 for fitted sweeps)")
    g.add_argument("--seed", type=int, help="random seed (default 0)")
    g.add_argument("--workers", type=int, help="worker processes (default 1)")
    g.add_argument("--out", help="output file (default stdout)")
    g.add_argument("--format", choices=["json", "csv", "svg", "md"], help="output format")


def _add_model_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--params", help="tables3:<label>, main-k or zero")
    p.add_argument("--frame", help="segments G:a..b separated by ';', e.g. J23:0..6.2832")
    p.add_argument("--energies", help="comma-separated frame energies")
    p.add_argument("--model", help="JSON file describing a model")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="braidtopo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("classify", help="classify a closed Hamiltonian path")
    _add_model_source(p)
    _add_globals(p)

    p = sub.add_parser("catalog", help="emit the charge/holonomy/braid catalog")
    p.add_argument("--strands", choices=["3", "4", "all"])
    _add_globals(p)

    p = sub.add_parser("sweep", help="classify over a one-parameter grid")
    _add_model_source(p)
    p.add_argument("--axis", help="parameter name, e.g. u")
    p.add_argument("--range", dest="span", help="start..stop")
    p.add_argument("--points", type=int, help="number of grid values")
    _add_globals(p)

    p = sub.add_parser("synth", help="synthetic response spectra for a fitted-parameter table")
    p.add_argument("--table", choices=sorted(SWEEP_TABLES))
    p.add_argument("--csv", help="fit-table CSV file ('-' for stdin)")
    p.add_argument("--constraint", choices=["t2=-t1", "t1=t2"])
    p.add_argument("--noise", type=float, help="relative noise level (default 0)")
    p.add_argument("--gamma", type=float, help=f"loss rate (default {DEFAULT_GAMMA})")
    p.add_argument("--samples", type=int, help="frequency samples per spectrum (default 200)")
    _add_globals(p)

    p = sub.add_parser("fit", help="fit response spectra")
    p.add_argument("--spectrum", help="spectrum CSV file ('-' for stdin)")
    p.add_argument("--init-table", help="fit-table CSV used as initial guesses")
    p.add_argument("--constraint", choices=["t2=-t1", "t1=t2"])
    _add_globals(p)

    p = sub.add_parser("braid-from-fits", help="braid word of a fitted theta sweep")
    p.add_argument("--table", choices=sorted(SWEEP_TABLES))
    p.add_argument("--csv", help="fit-table CSV file ('-' for stdin)")
    p.add_argument("--constraint", choices=["t2=-t1", "t1=t2"])
    _add_globals(p)

    p = sub.add_parser("robustness", help="disorder robustness study")
    _add_model_source(p)
    p.add_argument("--V", dest="V_list", help="comma-separated disorder strengths")
    p.add_argument("--seeds", type=int, help="perturbations per V (default 100)")
    _add_globals(p)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge the JSON config file under the command-line flags."""
    file_cfg: dict = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
        if not isinstance(file_cfg, dict):
            raise ConfigError("config must be a JSON object")
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "command")}
    merged = {**file_cfg, **flags}
    glob = {k: merged.pop(k, d) for k, d in GLOBAL_DEFAULTS.items()}
    try:
        return RunConfig(args.command, int(glob["nq"]),
                         None if glob["tol"] is None else float(glob["tol"]), int(glob["seed"]),
                         int(glob["workers"]), glob["out"], str(glob["format"]), merged)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad option value: {e}") from e


# ---- model sources ----

def parse_params(text: str) -> ThreeBandParams:
    if text == "zero":
        return ThreeBandParams()
    if text == "main-k":
        return MAIN_TEXT_K
    if text.startswith("tables3:"):
        try:
            return table_s3_params(text.split(":", 1)[1])
        except KeyError as e:
            raise ConfigError(str(e)) from e
    raise ConfigError(f"unknown --params {text!r}; use tables3:<{'|'.join(TABLE_LABELS)}>, main-k or zero")


def _snap_angle(x: float, tol: float = 1e-4) -> float:
    """Round typed angles such as 6.2832 to the nearby multiple of pi/4."""
    k = round(x / (np.pi / 4))
    return k * np.pi / 4 if abs(x - k * np.pi / 4) < tol else x


def parse_frame(text: str, energies: str | None) -> FrameSpec:
    if not energies:
        raise ConfigError("--frame needs --energies")
    try:
        e = tuple(float(x) for x in energies.split(","))
        segs = []
        for part in text.split(";"):
            gen, span = part.split(":")
            a, b = span.split("..")
            segs.append((gen.strip(), _snap_angle(float(a)), _snap_angle(float(b))))
        return FrameSpec(len(e), e, tuple(segs))
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad --frame/--energies: {e}") from e


def model_source(cfg: RunConfig) -> tuple[HamiltonianPath, ThreeBandParams | None]:
    """The path named by exactly one of --params, --frame or --model."""
    given = [k for k in ("params", "frame", "model") if cfg.opt(k) is not None]
    if len(given) != 1:
        raise ConfigError("give exactly one of --params, --frame, --model")
    src = given[0]
    if src == "params":
        p = parse_params(cfg.opt("params"))
        return bloch_path(p, cfg.opt("params")), p
    if src == "frame":
        return frame_path(parse_frame(cfg.opt("frame"), cfg.opt("energies"))), None
    model = cfg.opt("model")
    if isinstance(model, str):
        try:
            model = json.loads(Path(model).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read model {model}: {e}") from e
    path = path_from_config(model)
    params = None
    if model.get("model") == "three_band":
        from .models import params_from_dict

        params = params_from_dict(model)
    return path, params


# ---- output ----

def _emit(cfg: RunConfig, text: str, suffix: str | None = None) -> None:
    if cfg.out is None or cfg.out == "-":
        sys.stdout.write(text)
        return
    out = Path(cfg.out)
    if suffix:
        out = out.with_suffix(suffix)
    out.write_text(text)


def render_braid_svg(strands: StrandTable, report: ClassificationReport | None = None,
                     title: str = "") -> str:
    """SVG of eigenvector components and the dominant-component braid diagram."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = strands.rows
    t = rows[:, 0]
    band = rows[:, 1].astype(int)
    comps = rows[:, 3:]
    n = comps.shape[1]
    colors = ["tab:blue", "tab:green", "tab:red", "tab:purple"]
    with matplotlib.rc_context({"svg.hashsalt": "braidtopo", "svg.fonttype": "none"}):
        fig, axes = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
        for b in range(1, n + 1):
            sel = band == b
            for c in range(n):
                axes[0].plot(t[sel], comps[sel, c], color=colors[(b - 1) % 4],
                             ls=["-", "--", ":", "-."][c % 4], lw=1,
                             label=f"band {b}" if c == 0 else None)
            pos = np.argmax(np.abs(comps[sel]), axis=1) + 1
            axes[1].step(t[sel], pos + 0.08 * (b - (n + 1) / 2), where="post",
                         color=colors[(b - 1) % 4], lw=2, label=f"band {b}")
        axes[0].set_ylabel("component (line style = index)")
        axes[0].legend(loc="upper right", fontsize=7)
        axes[1].set_ylabel("dominant component")
        axes[1].set_yticks(range(1, n + 1))
        axes[1].set_xlabel("t")
        head = title
        if report is not None:
            word = format_word(report.full_word) if report.full_word is not None else "?"
            head = f"{title} charge {report.charge}, word {word}".strip()
        fig.suptitle(head)
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return buf.getvalue()


def _emit_report(cfg: RunConfig, report: ClassificationReport, strands: StrandTable | None,
                 title: str) -> None:
    if cfg.format == "csv":
        if strands is None:
            raise ConfigError("no strand table for this path")
        _emit(cfg, strands.to_csv())
    elif cfg.format == "svg":
        if strands is None:
            raise ConfigError("no strand table for this path")
        if cfg.out is None:
            raise ConfigError("--format svg needs --out")
        _emit(cfg, render_braid_svg(strands, report, title), ".svg")
        _emit(cfg, strands.to_csv(), ".csv")
        _emit(cfg, report.to_json() + "\n", ".json")
    else:
        _emit(cfg, report.to_json() + "\n")


# ---- commands ----

def cmd_classify(cfg: RunConfig) -> int:
    path, params = model_source(cfg)
    mirror = params is not None
    grid = PathGrid.for_path(path, cfg.nq, mirror=mirror)
    report = classify(path, grid, cfg.tolerance(), require_mirror=mirror)
    strands = strand_trajectories(eigenframe(path, grid)) if path.n == 3 else None
    _emit_report(cfg, report, strands, path.label)
    return EXIT_OK


def _catalog_md(entries) -> str:
    lines = ["| strands | charge | holonomy exponent | braid word | half word | lift | note |",
             "|---|---|---|---|---|---|---|"]
    for c in entries:
        d = c.to_dict()
        lines.append(f"| {c.strands} | {c.charge} | exp({c.angle:.6g} {c.generator}) | "
                     f"{d['braid_word']} | {d['half_word'] or ''} | {c.lift_charge or ''} | {c.note} |")
    return "\n".join(lines) + "\n"


def cmd_catalog(cfg: RunConfig) -> int:
    which = str(cfg.opt("strands", "all"))
    entries = [c for c in catalog() if which == "all" or str(c.strands) == which]
    if cfg.format == "md":
        _emit(cfg, _catalog_md(entries))
    elif cfg.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["strands", "charge", "generator", "angle", "braid_word", "half_word",
                    "lift_charge", "note"])
        for c in entries:
            d = c.to_dict()
            w.writerow([c.strands, c.charge, c.generator, f"{c.angle:.6g}", d["braid_word"],
                        d["half_word"] or "", c.lift_charge or "", c.note])
        _emit(cfg, buf.getvalue())
    else:
        _emit(cfg, catalog_to_json(entries) + "\n")
    return EXIT_OK


SWEEP_HEADER = ["index", "value", "status", "charge", "full_word", "half_word",
                "theta_minus", "theta_plus", "min_gap", "error"]


def _sweep_point(job):
    idx, value, params, nq, tol = job
    path = bloch_path(params)
    row = {"index": idx, "value": f"{value:.6g}"}
    try:
        r = classify(path, PathGrid.bz(nq), tol)
        d = r.to_dict()
        row.update(status="ok", charge=r.charge, full_word=d["full_word"] or "",
                   half_word=d["half_word"] or "",
                   theta_minus=" ".join(f"{x:.6g}" for x in r.theta_minus or []),
                   theta_plus=" ".join(f"{x:.6g}" for x in r.theta_plus or []),
                   min_gap=f"{min(r.diagnostics['min_gaps']):.6g}")
    except GapClosed as e:
        row.update(status="gap_closed", error=str(e))
    except BraidTopoError as e:
        row.update(status=type(e).__name__, error=str(e))
    return row


def sweep_rows(params: ThreeBandParams, axis: str, values, nq: int, tol: float,
               workers: int = 1) -> list[dict]:
    """One classification per axis value; failures are recorded, not raised."""
    if axis not in ThreeBandParams.__dataclass_fields__:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    jobs = [(i, float(v), replace(params, **{axis: float(v)}), nq, tol) for i, v in enumerate(values)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_sweep_point, jobs))
    return [_sweep_point(j) for j in jobs]


def cmd_sweep(cfg: RunConfig) -> int:
    path, params = model_source(cfg)
    if params is None:
        raise ConfigError("sweep needs a three-band model (--params or --model)")
    axis = cfg.opt("axis")
    span = cfg.opt("span")
    points = int(cfg.opt("points", 11))
    if axis is None or span is None:
        raise ConfigError("sweep needs --axis and --range")
    try:
        a, b = (float(x) for x in str(span).split(".."))
    except ValueError as e:
        raise ConfigError(f"bad --range {span!r}") from e
    if points < 1:
        raise ConfigError("--points must be positive")
    rows = sweep_rows(params, axis, np.linspace(a, b, points), cfg.nq, cfg.tolerance(), cfg.workers)
    buf = io.StringIO()
    w = csv.DictWriter(buf, SWEEP_HEADER, restval="", lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    _emit(cfg, buf.getvalue())
    return EXIT_OK


def _read_text(name: str) -> str:
    if name == "-":
        return sys.stdin.read()
    try:
        return Path(name).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {name}: {e}") from e


def _fit_table_source(cfg: RunConfig, gamma: float = DEFAULT_GAMMA) -> list[ResonatorParams]:
    table, path = cfg.opt("table"), cfg.opt("csv")
    if (table is None) == (path is None):
        raise ConfigError("give exactly one of --table or --csv")
    if table is not None:
        sweep, _ = sweep_table(table)
        return [replace(p, gamma=gamma) for p in sweep]
    return ingest_fit_table(_read_text(path), cfg.opt("constraint"), gamma=gamma)


def cmd_synth(cfg: RunConfig) -> int:
    gamma = float(cfg.opt("gamma", DEFAULT_GAMMA))
    noise = float(cfg.opt("noise", 0.0))
    samples = int(cfg.opt("samples", 200))
    sweep = _fit_table_source(cfg, gamma)
    parts = []
    for i, p in enumerate(sweep, start=1):
        s = synth_spectrum(p, default_grid(p, samples), noise, cfg.seed + i, theta_index=i)
        text = s.to_csv()
        parts.append(text if i == 1 else text.split("\n", 1)[1])
    _emit(cfg, "".join(parts))
    return EXIT_OK


def _fits_to_csv(results: list[tuple[int, FitResult]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point", "omega1", "omega2", "omega3", "t1", "t2"])
    for i, r in results:
        p = r.params
        w.writerow([i, *(repr(float(x)) for x in (*p.omega, p.t1, p.t2))])
    return buf.getvalue()


def cmd_fit(cfg: RunConfig) -> int:
    src = cfg.opt("spectrum")
    if src is None:
        raise ConfigError("fit needs --spectrum")
    spectra = spectra_from_csv(_read_text(src))
    inits = {}
    if cfg.opt("init_table"):
        table = ingest_fit_table(_read_text(cfg.opt("init_table")), cfg.opt("constraint"))
        inits = {i: p for i, p in enumerate(table, start=1)}
    results = []
    for s in spectra:
        init = inits.get(s.theta_index)
        try:
            results.append((s.theta_index, fit_spectrum(s, init=init)))
        except DegenerateSpectrum as e:
            raise DegenerateSpectrum(f"spectrum {s.theta_index}: {e}") from e
    if cfg.format == "csv":
        _emit(cfg, _fits_to_csv(results))
    else:
        payload = [{"theta_index": i, **r.to_dict()} for i, r in results]
        _emit(cfg, json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


def cmd_braid_from_fits(cfg: RunConfig) -> int:
    sweep = _fit_table_source(cfg)
    res = braid_from_sweep(sweep, tol=cfg.tolerance(0.1))
    _emit_report(cfg, res.report, res.strands, "fitted sweep")
    return EXIT_OK


ROBUST_HEADER = ["V", "runs", "gap_closed", "invariant", "failures", "fraction",
                 "min_gap_mean", "min_gap_min"]


def cmd_robustness(cfg: RunConfig) -> int:
    _, params = model_source(cfg)
    if params is None:
        raise ConfigError("robustness needs a three-band model")
    try:
        V_list = [float(v) for v in str(cfg.opt("V_list", "0")).split(",")]
    except ValueError as e:
        raise ConfigError(f"bad --V list: {e}") from e
    seeds = int(cfg.opt("seeds", 100))
    rows = robustness_study(params, V_list, seeds, cfg.nq, cfg.tolerance(), cfg.workers)
    breakdown = next((r.V for r in rows if r.fraction != 1.0), None)
    if cfg.format == "json":
        payload = {"rows": [r.__dict__ for r in rows], "breakdown_V": breakdown}
        _emit(cfg, json.dumps(payload, indent=2) + "\n")
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROBUST_HEADER)
        for r in rows:
            w.writerow([f"{getattr(r, k):.6g}" if isinstance(getattr(r, k), float) else getattr(r, k)
                        for k in ROBUST_HEADER])
        _emit(cfg, buf.getvalue())
        sys.stderr.write(f"breakdown V: {breakdown}\n")
    return EXIT_OK


COMMANDS = {
    "classify": cmd_classify,
    "catalog": cmd_catalog,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
    "fit": cmd_fit,
    "braid-from-fits": cmd_braid_from_fits,
    "robustness": cmd_robustness,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        return COMMANDS[cfg.command](cfg)
    except ConfigError as e:
        sys.stderr.write(f"config error: {e}\n")
        return EXIT_CONFIG
    except NotQuantized as e:
        sys.stderr.write(f"not quantized: {e}\n")
        return EXIT_NOT_QUANTIZED
    except GaugeAmbiguous as e:
        sys.stderr.write(f"gauge ambiguous: {e}\n")
        return EXIT_NOT_QUANTIZED
    except GapClosed as e:
        sys.stderr.write(f"gap closed: {e}\n")
        return EXIT_GAP
    except (DegenerateSpectrum, NonConvergence) as e:
        sys.stderr.write(f"fit failed: {e}\n")
        return EXIT_FIT
    except (BraidTopoError, ValueError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
