"""Structured-text file formats.

Data files
    One decimal literal per line; ``#`` starts a comment; blank lines are
    ignored.

Fit files (``schema = "lcmartingale.fit"``)
    A JSON object with ``knots``, ``log_density``, ``segment_masses``,
    ``total_mass``, ``kkt`` (the :class:`~lcmartingale.npmle.KktReport`),
    ``n``, ``config`` and ``library_version``.

Ensemble files (``schema = "lcmartingale.ensemble"``)
    Newline-delimited JSON.  Line 1 is a header record (resolved config,
    library version, data summary and the initial NPMLE); each further line is
    one chain record ordered by ``stream_id`` with the terminal fit (same
    fields as a fit file) and its diagnostics.

Floats are written with ``repr`` and therefore round-trip exactly.  No
timestamps are written, so output bytes depend only on the inputs.
"""
from __future__ import annotations

import json
import math

import numpy as np

from . import __version__
from .martingale import ChainDiagnostics, PosteriorEnsemble, StopRule
from .pwl import LogConcaveDensity, PWLConcave

__all__ = [
    "SCHEMA_VERSION",
    "DataFormatError",
    "read_data",
    "format_data",
    "fit_record",
    "density_from_record",
    "fit_document",
    "ensemble_header",
    "chain_record",
    "ensemble_lines",
    "ensemble_payload",
    "read_ensemble",
]

SCHEMA_VERSION = 1
FIT_SCHEMA = "lcmartingale.fit"
ENSEMBLE_SCHEMA = "lcmartingale.ensemble"


class DataFormatError(ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def read_data(text: str) -> np.ndarray:
    values = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        try:
            v = float(body)
        except ValueError:
            raise DataFormatError(f"not a number: {raw.strip()!r}", lineno) from None
        if not math.isfinite(v):
            raise DataFormatError(f"non-finite value: {raw.strip()!r}", lineno)
        values.append(v)
    return np.array(values, dtype=float)


def format_data(x) -> str:
    return "".join(f"{float(v)!r}\n" for v in x)


def _floats(a):
    return [float(v) for v in a]


def fit_record(f: LogConcaveDensity) -> dict:
    return {
        "knots": _floats(f.knots),
        "log_density": _floats(f.values),
        "segment_masses": _floats(f.segment_masses),
        "total_mass": float(f.total_mass),
    }


def density_from_record(rec: dict) -> LogConcaveDensity:
    return LogConcaveDensity.from_shape(PWLConcave(rec["knots"], rec["log_density"]))


def _dumps(obj, **kw) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=True, **kw)


def fit_document(f: LogConcaveDensity, report, n: int, config: dict) -> str:
    doc = {
        "schema": FIT_SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "library_version": __version__,
        "config": config,
        "n": int(n),
        **fit_record(f),
        "kkt": report.as_dict(),
    }
    return _dumps(doc, indent=2) + "\n"


def ensemble_header(ens: PosteriorEnsemble, data, config: dict) -> dict:
    data = np.asarray(data, dtype=float)
    return {
        "record": "header",
        "schema": ENSEMBLE_SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "library_version": __version__,
        "config": config,
        "base_seed": int(ens.base_seed),
        "B": ens.B,
        "rule": ens.rule.as_dict(),
        "data": {"n": int(data.size), "min": float(data.min()), "max": float(data.max())},
        "initial_fit": fit_record(ens.initial_fit),
        "flagged_chains": list(ens.flagged_chains),
    }


def chain_record(stream_id: int, f: LogConcaveDensity, diag: ChainDiagnostics) -> dict:
    return {
        "record": "chain",
        "stream_id": int(stream_id),
        **fit_record(f),
        "diagnostics": {
            "start_n": int(diag.start_n),
            "stopped_at": int(diag.stopped_at),
            "solver_failures": int(diag.solver_failures),
            "flagged": bool(diag.flagged),
            "sup_diffs": _floats(diag.sup_diffs),
        },
    }


def ensemble_lines(ens: PosteriorEnsemble):
    for sid, f, d in zip(ens.stream_ids, ens.fits, ens.diagnostics):
        yield _dumps(chain_record(sid, f, d))


def ensemble_payload(ens: PosteriorEnsemble) -> bytes:
    """Chain records only, as the bytes written to an ensemble file."""
    return "".join(line + "\n" for line in ensemble_lines(ens)).encode()


def ensemble_document(ens: PosteriorEnsemble, data, config: dict) -> str:
    head = _dumps(ensemble_header(ens, data, config))
    return head + "\n" + ensemble_payload(ens).decode()


def read_ensemble(text: str) -> PosteriorEnsemble:
    """Parse an ensemble file; raises :class:`DataFormatError` when corrupt."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataFormatError("empty ensemble file")
    try:
        records = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as err:
        raise DataFormatError(f"invalid JSON: {err}") from None
    head = records[0]
    if head.get("record") != "header" or head.get("schema") != ENSEMBLE_SCHEMA:
        raise DataFormatError("missing ensemble header", 1)
    if head.get("schema_version") != SCHEMA_VERSION:
        raise DataFormatError(f"unsupported schema_version {head.get('schema_version')}", 1)
    try:
        rule = StopRule(**head["rule"])
        initial = density_from_record(head["initial_fit"])
        fits, diags, ids = [], [], []
        for i, rec in enumerate(records[1:], start=2):
            if rec.get("record") != "chain":
                raise DataFormatError("expected a chain record", i)
            fits.append(density_from_record(rec))
            d = rec["diagnostics"]
            diags.append(ChainDiagnostics(int(d["start_n"]), int(d["stopped_at"]),
                                          np.array(d["sup_diffs"], dtype=float),
                                          int(d["solver_failures"])))
            ids.append(int(rec["stream_id"]))
    except (KeyError, TypeError, ValueError) as err:
        if isinstance(err, DataFormatError):
            raise
        raise DataFormatError(f"corrupt ensemble record: {err}") from None
    if len(fits) != head.get("B"):
        raise DataFormatError(f"header announces B={head.get('B')} but file has {len(fits)} chains")
    return PosteriorEnsemble(fits, diags, int(head["base_seed"]), rule, initial, ids)
