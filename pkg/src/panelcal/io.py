"""Score-file ingestion and report serialization.

Input is delimiter-separated UTF-8 text with a header row naming
``assessor``, ``object``, ``score``, and exactly one way of specifying
confidence: an ``uncertainty`` column (converted via 1/sigma**2), a
``confidence`` column (used as-is), or a ``level`` column with tokens
high/medium/low (converted with the scale ratio lambda).

Reports serialize deterministically: stable key order, locale-independent
number formatting, and byte-identical output for identical reports. The
JSON form round-trips losslessly through :func:`load_report`; the text and
CSV tables round numbers to 6 significant digits for display.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import statistics
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .calibration import (
    CalibrationResult,
    DegeneracyCondition,
    fit_cwc,
    fit_iba,
    fit_sa,
)
from .errors import DataError, InsufficientDataError
from .evidence import PriorConfig, compare_models
from .model import (
    Assessment,
    AssessmentGraph,
    ConfidenceLevel,
    Level,
    confidence_from_level,
    confidence_from_uncertainty,
)
from .posterior import posterior_sigma_cwc, posterior_sigma_sa
from .robustness import perturbation_bound

SCHEMA_VERSION = 1

_CONF_COLUMNS = ("uncertainty", "confidence", "level")
_DELIMITERS = (",", ";", "\t", "|")


def _fmt(x: float) -> str:
    """Fixed 6-significant-digit, locale-independent number formatting."""
    return f"{x:.6g}"


def _sniff_delimiter(header_line: str) -> str:
    counts = {d: header_line.count(d) for d in _DELIMITERS}
    best = max(counts, key=lambda d: counts[d])
    if counts[best] == 0:
        raise DataError(
            "could not find a delimiter in the header row; expected one of "
            "comma, semicolon, tab, or pipe"
        )
    return best


def load_scores(path, lam: float | None = None) -> AssessmentGraph:
    """Parse a scores file into an assessment graph.

    ``lam`` is the scale ratio used for qualitative confidence levels
    (defaults to 1.75); it is rejected for files that do not carry a
    level column.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise DataError(f"{path}: file is empty")
    delimiter = _sniff_delimiter(lines[0])
    reader = csv.reader(_io.StringIO(text), delimiter=delimiter)
    header = [h.strip().lower() for h in next(reader)]

    for required in ("assessor", "object", "score"):
        if required not in header:
            raise DataError(f"{path}: missing required column {required!r}")
    conf_styles = [c for c in _CONF_COLUMNS if c in header]
    if len(conf_styles) != 1:
        raise DataError(
            f"{path}: need exactly one of {_CONF_COLUMNS} as the confidence "
            f"column, found {conf_styles or 'none'}"
        )
    style = conf_styles[0]
    if lam is not None and style != "level":
        raise DataError(
            f"{path}: lambda only applies to files with a 'level' column"
        )
    col = {name: header.index(name) for name in header}

    assessments: list[Assessment] = []
    seen: dict[tuple[str, str], int] = {}
    row_no = 1
    for row in reader:
        row_no += 1
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            raise DataError(f"{path}:{row_no}: expected {len(header)} fields, got {len(row)}")
        assessor = row[col["assessor"]].strip()
        object_id = row[col["object"]].strip()
        if not assessor or not object_id:
            raise DataError(f"{path}:{row_no}: empty assessor or object identifier")
        pair = (assessor, object_id)
        if pair in seen:
            raise DataError(
                f"{path}:{row_no}: duplicate assessment for {pair} "
                f"(first seen at row {seen[pair]})"
            )
        seen[pair] = row_no
        try:
            score = float(row[col["score"]])
        except ValueError:
            raise DataError(
                f"{path}:{row_no}: score {row[col['score']]!r} is not a number"
            ) from None
        raw = row[col[style]].strip()
        declared = None
        try:
            if style == "uncertainty":
                declared = float(raw)
                confidence = confidence_from_uncertainty(declared)
            elif style == "confidence":
                confidence = float(raw)
            else:
                try:
                    band = Level(raw.lower())
                except ValueError:
                    raise DataError(
                        f"{path}:{row_no}: unknown level {raw!r}; expected "
                        "high, medium, or low"
                    ) from None
                confidence = confidence_from_level(
                    ConfidenceLevel(band) if lam is None else ConfidenceLevel(band, lam)
                )
            assessments.append(
                Assessment(assessor, object_id, score, confidence, declared)
            )
        except DataError as exc:
            if f"{path}:" in str(exc):
                raise
            raise DataError(f"{path}:{row_no}: {exc}") from None
        except ValueError:
            raise DataError(f"{path}:{row_no}: bad numeric value {raw!r}") from None
    if not assessments:
        raise DataError(f"{path}: no data rows")
    return AssessmentGraph.from_assessments(assessments)


def write_scores(graph: AssessmentGraph, path) -> None:
    """Serialize a graph back to the canonical comma-separated form."""
    all_declared = all(a.declared_uncertainty is not None for a in graph.assessments)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if all_declared:
            writer.writerow(["assessor", "object", "score", "uncertainty"])
            for a in graph.assessments:
                writer.writerow([a.assessor, a.object, repr(a.score), repr(a.declared_uncertainty)])
        else:
            writer.writerow(["assessor", "object", "score", "confidence"])
            for a in graph.assessments:
                writer.writerow([a.assessor, a.object, repr(a.score), repr(a.confidence)])


@dataclass(frozen=True)
class RunReport:
    """Everything one analysis run produced, as plain serializable data."""

    meta: dict
    fit: dict
    robustness: dict
    posterior: dict
    evidence: dict
    ranking: dict


def _ranking_rows(result: CalibrationResult) -> list[dict]:
    entries = sorted(
        zip(result.objects, (float(v) for v in result.values)),
        key=lambda item: (-item[1], item[0]),
    )
    shown = [_fmt(v) for _, v in entries]
    rows = []
    for i, (obj, value) in enumerate(entries):
        tied = (i > 0 and shown[i - 1] == shown[i]) or (
            i + 1 < len(shown) and shown[i + 1] == shown[i]
        )
        rows.append({"rank": i + 1, "object": obj, "value": value, "tied": tied})
    return rows


def _fit_section(result: CalibrationResult) -> dict:
    condition = None
    if result.condition is not None:
        condition = {"kind": result.condition.kind.value}
        if result.condition.v_ref is not None:
            condition["v_ref"] = float(result.condition.v_ref)
    return {
        "values": {o: float(v) for o, v in zip(result.objects, result.values)},
        "biases": {a: float(b) for a, b in zip(result.assessors, result.biases)},
        "residual": float(result.residual),
        "dof": int(result.dof),
        "condition": condition,
    }


def build_report(
    graph: AssessmentGraph,
    condition: DegeneracyCondition,
    prior: PriorConfig,
    input_digest: str = "",
    seed: int | None = None,
    flags: dict | None = None,
) -> RunReport:
    """Run all analyses on a graph and collect them into one report."""
    fits = {
        "sa": fit_sa(graph),
        "iba": fit_iba(graph, condition),
        "cwc": fit_cwc(graph, condition),
    }

    robustness = perturbation_bound(graph, condition)
    robustness_section = {
        "lambda2": None if robustness.lambda2 is None else float(robustness.lambda2),
        "mu2": float(robustness.mu2),
        "bound_factor": float(robustness.bound_factor),
        "condition": condition.kind.value,
        "per_object_bound": {
            o: float(b) for o, b in zip(graph.objects, robustness.per_object_bound)
        },
    }

    posterior_section: dict = {}
    for name, fn in (
        ("sa", posterior_sigma_sa),
        ("iba", posterior_sigma_cwc),
        ("cwc", posterior_sigma_cwc),
    ):
        try:
            rep = fn(fits[name], graph)
            posterior_section[name] = {
                "sigma_rms": float(rep.sigma_rms),
                "w_star": float(rep.w_star),
                "nu": int(rep.nu),
            }
        except (InsufficientDataError, DataError) as exc:
            posterior_section[name] = {"error": str(exc)}

    try:
        ev = compare_models(graph, prior)
        evidence_section = {
            "log_evidence": {
                "sa": float(ev.log_evidence_sa),
                "iba": float(ev.log_evidence_iba),
                "cwc": float(ev.log_evidence_cwc),
            },
            "ranking": list(ev.ranking),
            "components": {
                m: {k: float(v) for k, v in parts.items()}
                for m, parts in ev.components.items()
            },
            "priors": {
                "sigma_o": prior.sigma_o,
                "sigma_a": prior.sigma_a,
                "w_min": prior.w_min,
                "w_max": prior.w_max,
                "v_ref": prior.v_ref,
            },
        }
    except (InsufficientDataError, DataError) as exc:
        evidence_section = {"error": str(exc)}

    meta = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "input_digest": input_digest,
        "seed": seed,
        "flags": flags or {},
        "assessors": list(graph.assessors),
        "objects": list(graph.objects),
        "n_assessments": graph.n_assessments,
    }
    return RunReport(
        meta=meta,
        fit={name: _fit_section(result) for name, result in fits.items()},
        robustness=robustness_section,
        posterior=posterior_section,
        evidence=evidence_section,
        ranking={name: _ranking_rows(result) for name, result in fits.items()},
    )


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _report_dict(report: RunReport) -> dict:
    return {
        "meta": report.meta,
        "fit": report.fit,
        "robustness": report.robustness,
        "posterior": report.posterior,
        "evidence": report.evidence,
        "ranking": report.ranking,
    }


def load_report(path) -> RunReport:
    """Load a JSON report written by :func:`write_report`."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunReport(
        meta=data["meta"],
        fit=data["fit"],
        robustness=data["robustness"],
        posterior=data["posterior"],
        evidence=data["evidence"],
        ranking=data["ranking"],
    )


def _assessor_table(graph: AssessmentGraph, report: RunReport) -> list[dict]:
    """Per-assessor score statistics plus fitted biases, Table-style."""
    by_assessor: dict[str, list[float]] = {a: [] for a in graph.assessors}
    for a in graph.assessments:
        by_assessor[a.assessor].append(a.score)
    rows = []
    for assessor in graph.assessors:
        scores = by_assessor[assessor]
        rows.append(
            {
                "assessor": assessor,
                "n": len(scores),
                "mean_score": statistics.fmean(scores),
                "sd_score": statistics.stdev(scores) if len(scores) > 1 else 0.0,
                "bias_iba": report.fit["iba"]["biases"][assessor],
                "bias_cwc": report.fit["cwc"]["biases"][assessor],
            }
        )
    rows.sort(key=lambda r: -r["bias_cwc"])
    return rows


def _write_text(report: RunReport, graph: AssessmentGraph, out: Path) -> list[Path]:
    lines: list[str] = []
    lines.append(f"panelcal report (schema {report.meta['schema_version']})")
    lines.append(
        f"{len(report.meta['objects'])} objects, "
        f"{len(report.meta['assessors'])} assessors, "
        f"{report.meta['n_assessments']} assessments"
    )
    lines.append("")
    lines.append("== Ranked values ==")
    header = f"{'rank':>4}  " + "  ".join(f"{m.upper():>16}" for m in ("sa", "iba", "cwc"))
    lines.append(header)
    n_obj = len(report.meta["objects"])
    columns = {m: report.ranking[m] for m in ("sa", "iba", "cwc")}
    for i in range(n_obj):
        cells = []
        for m in ("sa", "iba", "cwc"):
            row = columns[m][i]
            mark = "=" if row["tied"] else " "
            cells.append(f"{row['object']:>8} {_fmt(row['value']):>6}{mark}")
        lines.append(f"{i + 1:>4}  " + "  ".join(cells))
    lines.append("(= marks a tie at displayed precision, broken by identifier)")
    lines.append("")
    lines.append("== Assessors ==")
    lines.append(
        f"{'assessor':>10} {'n':>4} {'mean':>9} {'sd':>9} {'bias IBA':>9} {'bias CWC':>9}"
    )
    for row in _assessor_table(graph, report):
        lines.append(
            f"{row['assessor']:>10} {row['n']:>4} {_fmt(row['mean_score']):>9} "
            f"{_fmt(row['sd_score']):>9} {_fmt(row['bias_iba']):>9} "
            f"{_fmt(row['bias_cwc']):>9}"
        )
    lines.append("")
    lines.append("== Fit ==")
    for m in ("sa", "iba", "cwc"):
        sec = report.fit[m]
        lines.append(
            f"{m.upper():>4}: residual {_fmt(sec['residual'])}  dof {sec['dof']}"
        )
    lines.append("")
    lines.append("== Robustness ==")
    rob = report.robustness
    lam2 = "n/a" if rob["lambda2"] is None else _fmt(rob["lambda2"])
    lines.append(
        f"lambda2 {lam2}  mu2 {_fmt(rob['mu2'])}  bound factor "
        f"{_fmt(rob['bound_factor'])} (condition {rob['condition']})"
    )
    lines.append("")
    lines.append("== Posterior uncertainty ==")
    for m in ("sa", "iba", "cwc"):
        sec = report.posterior[m]
        if "error" in sec:
            lines.append(f"{m.upper():>4}: unavailable ({sec['error']})")
        else:
            lines.append(
                f"{m.upper():>4}: sigma {_fmt(sec['sigma_rms'])} "
                f"(w* {_fmt(sec['w_star'])}, nu {sec['nu']})"
            )
    lines.append("")
    lines.append("== Evidence ==")
    if "error" in report.evidence:
        lines.append(f"unavailable ({report.evidence['error']})")
    else:
        for m in report.evidence["ranking"]:
            lines.append(
                f"{m.upper():>4}: log-evidence "
                f"{_fmt(report.evidence['log_evidence'][m])}"
            )
    path = out / "report.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return [path]


def _write_csv_tables(report: RunReport, graph: AssessmentGraph, out: Path) -> list[Path]:
    paths = []

    ranking_path = out / "ranking.csv"
    with open(ranking_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "rank", "object", "value", "tied"])
        for m in ("sa", "iba", "cwc"):
            for row in report.ranking[m]:
                writer.writerow(
                    [m, row["rank"], row["object"], _fmt(row["value"]), int(row["tied"])]
                )
    paths.append(ranking_path)

    assessor_path = out / "assessors.csv"
    with open(assessor_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["assessor", "n", "mean_score", "sd_score", "bias_iba", "bias_cwc"])
        for row in _assessor_table(graph, report):
            writer.writerow(
                [
                    row["assessor"],
                    row["n"],
                    _fmt(row["mean_score"]),
                    _fmt(row["sd_score"]),
                    _fmt(row["bias_iba"]),
                    _fmt(row["bias_cwc"]),
                ]
            )
    paths.append(assessor_path)

    summary_path = out / "summary.csv"
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "residual", "dof", "sigma_rms", "log_evidence"])
        for m in ("sa", "iba", "cwc"):
            sigma = report.posterior[m].get("sigma_rms")
            log_ev = None
            if "error" not in report.evidence:
                log_ev = report.evidence["log_evidence"][m]
            writer.writerow(
                [
                    m,
                    _fmt(report.fit[m]["residual"]),
                    report.fit[m]["dof"],
                    "" if sigma is None else _fmt(sigma),
                    "" if log_ev is None else _fmt(log_ev),
                ]
            )
    paths.append(summary_path)
    return paths


def write_report(
    report: RunReport,
    fmt: str,
    out_dir,
    graph: AssessmentGraph | None = None,
) -> list[Path]:
    """Write the report in the requested format; returns written paths.

    The text and csv-tables formats need the graph for the per-assessor
    score statistics.
    """
    if fmt not in ("json", "text", "csv-tables"):
        raise DataError(f"unknown report format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out / "report.json"
        path.write_text(
            json.dumps(_report_dict(report), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        return [path]
    if graph is None:
        raise DataError(f"format {fmt!r} requires the assessment graph")
    if fmt == "text":
        return _write_text(report, graph, out)
    return _write_csv_tables(report, graph, out)
