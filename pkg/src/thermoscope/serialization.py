"""JSON and CSV input/output.

Floats are written with ``repr``, i.e. the shortest string that round-trips
to the same double.  Non-finite values become ``null``.
"""

import csv
import hashlib
import json
from dataclasses import asdict
from functools import lru_cache
from importlib import resources

import jsonschema
import numpy as np

from .dataset import Dataset
from .errors import ValidationError
from .geometry import LevelOfDescription
from .operators import expectations

SCHEMAS = ("dataset", "levels", "report", "simulation")


@lru_cache(maxsize=None)
def load_schema(name):
    """One of the published JSON schemas (``dataset``, ``levels``, ``report``, ``simulation``)."""
    if name not in SCHEMAS:
        raise KeyError(name)
    text = resources.files("thermoscope").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(document, name):
    """Validate ``document`` against schema ``name``; errors carry the JSON path."""
    validator = jsonschema.Draft202012Validator(load_schema(name))
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        if err.validator == "required":
            missing = [k for k in err.validator_value if k not in err.instance]
            if missing:
                path = "/".join([*map(str, err.absolute_path), missing[0]])
        raise ValidationError(err.message, path)


def _matrix_to_json(a):
    a = np.asarray(a, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def _observables_from_json(entries, d):
    observables, names = [], []
    for k, entry in enumerate(entries):
        path = f"observables/{k}/matrix"
        mat = _matrix_from_json(entry["matrix"], path)
        if mat.shape[0] != d:
            raise ValidationError(f"matrix is {mat.shape[0]}x{mat.shape[0]}, dimension is {d}", path)
        if not np.allclose(mat, mat.conj().T, atol=1e-8):
            raise ValidationError("observable is not Hermitian", path)
        observables.append(mat)
        names.append(entry["name"])
    return observables, names


def _matrix_from_json(rows, path):
    try:
        arr = np.array(rows, dtype=float)
    except ValueError as exc:
        raise ValidationError(f"ragged matrix: {exc}", path) from None
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"expected a square matrix of [re, im] pairs, got shape {arr.shape[:2]}", path)
    return arr[..., 0] + 1j * arr[..., 1]


def _clean(x):
    """Plain JSON-compatible python objects."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else None
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


# datasets

def dataset_from_dict(doc):
    """Build a :class:`Dataset` from its JSON form (validated first)."""
    validate(doc, "dataset")
    d = doc["dimension"]
    observables, names = _observables_from_json(doc["observables"], d)
    ref = doc.get("reference_state", "uniform")
    reference = None
    if ref != "uniform":
        reference = _matrix_from_json(ref, "reference_state")
        if reference.shape[0] != d:
            raise ValidationError(f"reference state is {reference.shape[0]}x{reference.shape[0]}, dimension is {d}",
                                  "reference_state")
    m = len(observables)
    for i, s in enumerate(doc["samples"]):
        if len(s["means"]) != m:
            raise ValidationError(f"{len(s['means'])} means for {m} observables", f"samples/{i}/means")
    sizes = [s["size"] for s in doc["samples"]]
    means = [s["means"] for s in doc["samples"]]
    return Dataset(tuple(observables), sizes, means, reference, tuple(names), dict(doc.get("metadata", {})))


def dataset_to_dict(ds):
    ref = ds.reference
    doc = {
        "dimension": int(ds.dim),
        "observables": [{"name": n, "matrix": _matrix_to_json(f)} for n, f in zip(ds.names, ds.observables)],
        "reference_state": "uniform" if ref.is_maximally_mixed() else _matrix_to_json(ref.matrix),
        "samples": [{"size": int(n), "means": [float(x) for x in f]} for n, f in zip(ds.sizes, ds.means)],
    }
    if ds.metadata:
        doc["metadata"] = _clean(ds.metadata)
    return doc


def load_dataset(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}", str(path)) from None
    return dataset_from_dict(doc)


def dump_dataset(ds, stream):
    json.dump(dataset_to_dict(ds), stream, indent=1)
    stream.write("\n")


def dataset_digest(ds):
    """``sha256:`` of the canonical compact JSON encoding (metadata excluded)."""
    doc = dataset_to_dict(ds)
    doc.pop("metadata", None)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return "sha256:" + hashlib.sha256(blob).hexdigest()


# simulation configs

def simulation_config_from_dict(doc):
    """Build a :class:`~thermoscope.simulate.SimulationConfig` from its JSON form.

    The truth is either a canonical family (``xi`` and ``betas``) or a list
    of explicit ``states``, one per entry of ``sizes``.
    """
    from .operators import DensityMatrix
    from .simulate import SimulationConfig

    validate(doc, "simulation")
    d = doc["dimension"]
    observables, names = _observables_from_json(doc["observables"], d)
    kwargs = {}
    if "states" in doc:
        states = []
        for i, rows in enumerate(doc["states"]):
            path = f"states/{i}"
            mat = _matrix_from_json(rows, path)
            if mat.shape[0] != d:
                raise ValidationError(f"state is {mat.shape[0]}x{mat.shape[0]}, dimension is {d}", path)
            try:
                states.append(DensityMatrix(mat))
            except ValidationError as exc:
                raise ValidationError(str(exc), path) from None
        kwargs["states"] = tuple(states)
    else:
        if len(doc["xi"]) != len(observables):
            raise ValidationError(f"{len(doc['xi'])} components for {len(observables)} observables", "xi")
        kwargs["xi"] = np.array(doc["xi"], dtype=float)
        kwargs["betas"] = np.array(doc["betas"], dtype=float)
    return SimulationConfig(tuple(observables), tuple(doc["sizes"]), noise_model=doc.get("noise_model", "gaussian"),
                            seed=doc.get("seed", 0), names=tuple(names), true_dimension=doc.get("true_dimension"),
                            label=doc.get("label", "config"), **kwargs)


def load_simulation_config(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}", str(path)) from None
    return simulation_config_from_dict(doc)


# candidate levels

def levels_from_dict(doc, dataset):
    """Candidate levels given by real coefficients on the dataset observables."""
    validate(doc, "levels")
    basis = np.asarray(dataset.observables)
    levels = []
    for k, entry in enumerate(doc["levels"]):
        coefs = np.array(entry["coefficients"], dtype=float).reshape(-1, dataset.m) if entry["coefficients"] else \
            np.zeros((0, dataset.m))
        if coefs.shape[1] != dataset.m:
            raise ValidationError(f"each coefficient row needs {dataset.m} entries", f"levels/{k}/coefficients")
        levels.append(LevelOfDescription.from_coefficients(coefs, basis, entry["label"]))
    return levels


def load_levels(path, dataset):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}", str(path)) from None
    for k, entry in enumerate(doc.get("levels", []) if isinstance(doc, dict) else []):
        for j, row in enumerate(entry.get("coefficients", []) if isinstance(entry, dict) else []):
            if isinstance(row, list) and len(row) != dataset.m:
                raise ValidationError(f"each coefficient row needs {dataset.m} entries",
                                      f"levels/{k}/coefficients/{j}")
    return levels_from_dict(doc, dataset)


# reports

def hamiltonian_to_dict(est):
    if est is None:
        return None
    return _clean({
        "xi": est.xi,
        "beta_bar": est.beta_bar,
        "per_sample_beta": est.per_sample_beta,
        "internal_energies": est.internal_energies,
        "mean_energy": est.mean_energy,
        "max_log_likelihood": est.max_log_likelihood,
        "method": est.method,
        "effective": est.effective,
        "gradient_norm": est.gradient_norm,
        "mle_residual": est.mle_residual,
        "projection_beta": est.projection_beta,
        "thermal": asdict(est.thermal),
        "notes": list(est.notes),
    })


def report_to_dict(report):
    doc = {
        "dataset_digest": report.dataset_digest,
        "gaussian_regime": {
            "ok": report.gaussian_regime,
            "max_pair_entropy": report.max_pair_entropy,
            "max_center_entropy": report.max_center_entropy,
        },
        "scores": [
            {
                "label": s.label,
                "p": s.p,
                "log_likelihood": s.log_likelihood,
                "full_log_likelihood": s.full_log_likelihood,
                "alpha": s.alpha,
                "alpha_curvature": s.alpha_curvature,
                "reliable": s.reliable,
                "coefficients": s.coefficients,
            }
            for s in report.scores
        ],
        "winner": report.winner,
        "winner_p": report.winner_p,
        "comparisons": [
            {"coarse": c.coarse, "fine": c.fine, "delta_log_likelihood": c.criterion,
             "direct_difference": c.direct}
            for c in report.comparisons
        ],
        "hamiltonian": hamiltonian_to_dict(report.hamiltonian),
        "verdict": report.verdict,
        "margins": report.margins,
        "margin_factor": report.margin_factor,
        "warnings": list(report.warnings),
        "caveat": report.caveat,
    }
    doc = _clean(doc)
    validate(doc, "report")
    return doc


def dump_report(report, stream):
    json.dump(report_to_dict(report), stream, indent=1)
    stream.write("\n")


# plot data

PLOT_FIELDS_PREFIX = ("sample", "size")


def write_plot_data(dataset, level, stream):
    """Tidy CSV: measured means, means of the projection onto ``level`` and residuals.

    One row per sample; columns ``mean_<name>``, ``proj_<name>``, ``resid_<name>``.
    """
    from .selection import project_dataset

    proj = project_dataset(dataset, level)
    stack = np.asarray(dataset.observables)
    names = list(dataset.names)
    fields = list(PLOT_FIELDS_PREFIX) + [f"{k}_{n}" for k in ("mean", "proj", "resid") for n in names]
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(fields)
    for i, (n, f) in enumerate(zip(dataset.sizes, dataset.means)):
        g = expectations(stack, proj.projections[i].state)
        writer.writerow([i, int(n), *map(repr, map(float, f)), *map(repr, map(float, g)),
                         *map(repr, map(float, f - g))])
