"""
Grid-search harness: sweeps learning rate x regularization magnitude for each
framework, evaluates MAE and DME per cell, and exports surface tables.
Also owns the INI experiment config and the plain-text model format.
"""

import configparser
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from data import SplitPair, load_dataset, split
from errors import ContractViolation, DatasetFormatError, DivergenceError
from factorization import FactorModel, RatingsDataset, RegularizationFramework
from metrics import evaluate
from models import Framework, GridSpec, Hyperparams, RunStatus, SurfaceRow, SurfaceTable
from trainer import train

logger = logging.getLogger(__name__)

SURFACE_COLUMNS = ["framework", "learning_rate", "reg_magnitude", "mae", "dme", "status"]
MODEL_MAGIC = "factor-model v1"

_FRAMEWORK_ALIASES = {
    "none": Framework.NONE,
    "global": Framework.GLOBAL_SCALAR,
    "global_scalar": Framework.GLOBAL_SCALAR,
    "per_vector": Framework.PER_VECTOR_SCALAR,
    "per_vector_scalar": Framework.PER_VECTOR_SCALAR,
    "vector_dot": Framework.VECTOR_DOT,
    "dot": Framework.VECTOR_DOT,
}


def parse_framework(value: str) -> Framework:
    key = value.strip().lower().replace("-", "_")
    if key not in _FRAMEWORK_ALIASES:
        raise ValueError(f"Unknown framework '{value}'")
    return _FRAMEWORK_ALIASES[key]


def framework_for(tag: Framework, magnitude: float, num_users: int,
                  num_items: int) -> RegularizationFramework:
    """Framework object for one grid cell's regularization magnitude"""
    if tag == Framework.GLOBAL_SCALAR:
        return RegularizationFramework.global_scalar(magnitude)
    if tag == Framework.PER_VECTOR_SCALAR:
        return RegularizationFramework.per_vector_scalar(
            np.full(num_users, magnitude), np.full(num_items, magnitude)
        )
    if tag == Framework.VECTOR_DOT:
        return RegularizationFramework.vector_dot()
    return RegularizationFramework.none()


def cell_hyperparams(template: Hyperparams, tag: Framework, learning_rate: float,
                     magnitude: float) -> Hyperparams:
    update = {"eta_feat": learning_rate, "eta_reg": learning_rate}
    if tag == Framework.VECTOR_DOT:
        update["init_reg_value"] = magnitude
    return template.model_copy(update=update)


# ---------------------------------------------------------------------------
# INI experiment config
# ---------------------------------------------------------------------------

def _floats(raw: str) -> List[float]:
    return [float(part) for part in raw.replace(";", ",").split(",") if part.strip()]


def read_config(path: Union[str, Path]) -> configparser.ConfigParser:
    path = Path(path).expanduser()
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    return parser


def hyperparams_from_config(parser: configparser.ConfigParser,
                            base: Optional[Hyperparams] = None) -> Hyperparams:
    """Apply the [train] section on top of base hyperparameters"""
    values = (base or Hyperparams()).model_dump()
    if parser.has_section("train"):
        section = parser["train"]
        for key in ("k", "epochs", "seed"):
            if key in section:
                values[key] = section.getint(key)
        for key in ("eta_feat", "eta_reg", "init_scale_feat", "init_reg_value", "early_stop_tol"):
            if key in section:
                values[key] = section.getfloat(key)
        if "mode" in section:
            mode = section["mode"].strip().lower()
            values["train_mode"] = "batch_gd" if mode in {"batch", "batch_gd"} else mode
    if parser.has_section("metrics") and "clamp" in parser["metrics"]:
        values["clamp_predictions"] = parser["metrics"].getboolean("clamp")
    return Hyperparams(**values)


def load_grid_spec(path: Union[str, Path], seed: Optional[int] = None) -> GridSpec:
    """Build a GridSpec from an INI file with [dataset] [split] [grid] [train] [metrics]"""
    path = Path(path).expanduser()
    parser = read_config(path)
    spec: Dict = {}

    if parser.has_section("dataset"):
        section = parser["dataset"]
        if "path" in section:
            dataset_path = Path(section["path"]).expanduser()
            if not dataset_path.is_absolute():
                dataset_path = path.parent / dataset_path
            spec["dataset_path"] = dataset_path
        if "preset" in section:
            spec["dataset_preset"] = section["preset"].strip()
    if parser.has_section("split"):
        section = parser["split"]
        if "ratio" in section:
            spec["split_ratio"] = section.getfloat("ratio")
        if "seed" in section:
            spec["split_seed"] = section.getint("seed")
    if parser.has_section("grid"):
        section = parser["grid"]
        if "learning_rates" in section:
            spec["learning_rates"] = _floats(section["learning_rates"])
        if "reg_magnitudes" in section:
            spec["reg_magnitudes"] = _floats(section["reg_magnitudes"])
        if "frameworks" in section:
            spec["frameworks"] = [
                parse_framework(name) for name in section["frameworks"].split(",") if name.strip()
            ]
    if parser.has_section("metrics"):
        section = parser["metrics"]
        if "k_top" in section:
            spec["k_top"] = section.getint("k_top")
        if "clamp" in section:
            spec["clamp"] = section.getboolean("clamp")

    base = Hyperparams(seed=seed) if seed is not None else None
    spec["hyperparams"] = hyperparams_from_config(parser, base)
    if seed is not None and not (parser.has_section("split") and "seed" in parser["split"]):
        spec["split_seed"] = seed
    return GridSpec(**spec)


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------

def _grid_cells(spec: GridSpec) -> List[Tuple[Framework, float, float]]:
    frameworks = sorted(spec.frameworks, key=lambda fw: fw.value)
    rates = sorted(spec.learning_rates)
    magnitudes = sorted(spec.reg_magnitudes)
    return [(fw, lr, mag) for fw in frameworks for lr in rates for mag in magnitudes]


def run_cell(pair: SplitPair, spec: GridSpec, tag: Framework, learning_rate: float,
             magnitude: float) -> SurfaceRow:
    h = cell_hyperparams(spec.hyperparams, tag, learning_rate, magnitude)
    framework = framework_for(tag, magnitude, pair.train.num_users, pair.train.num_items)
    try:
        result = train(pair.train, h, framework)
    except DivergenceError as exc:
        logger.warning(f"{tag.value} lr={learning_rate:g} mag={magnitude:g}: {exc}")
        return SurfaceRow(framework=tag, learning_rate=learning_rate, reg_magnitude=magnitude,
                          status=RunStatus.DIVERGED)
    report = evaluate(result.model, pair.train, pair.test, k_top=spec.k_top, clamp=spec.clamp)
    return SurfaceRow(framework=tag, learning_rate=learning_rate, reg_magnitude=magnitude,
                      mae=report.mae, dme=report.dme, status=RunStatus.OK)


def load_split(spec: GridSpec) -> SplitPair:
    if spec.dataset_path is None:
        raise ContractViolation("grid spec has no dataset path")
    data = load_dataset(spec.dataset_path, spec.dataset_preset)
    return split(data, spec.split_ratio, spec.split_seed)


def run_grid(spec: GridSpec, threads: int = 1, pair: Optional[SplitPair] = None) -> SurfaceTable:
    """Train and evaluate every (framework, learning rate, magnitude) cell.

    Every cell uses the same split. Cells run on up to `threads` worker
    threads; each training run stays single-threaded, and rows are assembled
    in (framework, lr, magnitude) order whatever the thread count.
    """
    if pair is None:
        pair = load_split(spec)
    cells = _grid_cells(spec)
    logger.info(f"Running {len(cells)} grid cells on {max(1, threads)} thread(s)")

    if threads <= 1:
        rows = [run_cell(pair, spec, *cell) for cell in cells]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda cell: run_cell(pair, spec, *cell), cells))

    table = SurfaceTable(rows=rows)
    expected = len(set(spec.learning_rates)) * len(set(spec.reg_magnitudes))
    for framework in table.frameworks():
        if len(table.rows_for(framework)) != expected:
            raise RuntimeError(f"grid for {framework.value} is incomplete")

    if all(row.status == RunStatus.DIVERGED for row in rows):
        logger.error("Every grid cell diverged; no best cell to report")
    for framework, best in table.best_rows().items():
        if best is None:
            logger.error(f"{framework.value}: all cells diverged")
        else:
            logger.info(
                f"{framework.value}: best MAE {best.mae:.4f} at lr={best.learning_rate:g}, "
                f"magnitude={best.reg_magnitude:g}"
            )
    return table


def surface_roughness(table: SurfaceTable, framework: Framework) -> Optional[float]:
    """Mean absolute MAE difference between grid-adjacent ok cells"""
    rows = table.rows_for(framework)
    rates = sorted({row.learning_rate for row in rows})
    magnitudes = sorted({row.reg_magnitude for row in rows})
    grid = np.full((len(rates), len(magnitudes)), np.nan)
    for row in rows:
        if row.status == RunStatus.OK and row.mae is not None:
            grid[rates.index(row.learning_rate), magnitudes.index(row.reg_magnitude)] = row.mae
    diffs = np.concatenate([
        np.abs(np.diff(grid, axis=0)).ravel(),
        np.abs(np.diff(grid, axis=1)).ravel(),
    ])
    diffs = diffs[np.isfinite(diffs)]
    if diffs.shape[0] == 0:
        return None
    return float(diffs.mean())


def _format(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{value:.10g}"


def export_surface(table: SurfaceTable, path: Union[str, Path]) -> List[Path]:
    """
    Write the surface CSV plus one gnuplot grid file per (framework, metric).

    Grid files sit next to the CSV as `<stem>.<framework>.<metric>.dat` with
    `learning_rate reg_magnitude value` lines, one blank-line separated block
    per learning rate; missing values are written as NaN.
    """
    if not table.rows:
        raise ContractViolation("cannot export an empty surface table")
    path = Path(path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)

    ordered = sorted(table.rows, key=lambda r: (r.framework.value, r.learning_rate, r.reg_magnitude))
    frame = pd.DataFrame([
        {
            "framework": row.framework.value,
            "learning_rate": _format(row.learning_rate),
            "reg_magnitude": _format(row.reg_magnitude),
            "mae": _format(row.mae),
            "dme": _format(row.dme),
            "status": row.status.value,
        }
        for row in ordered
    ], columns=SURFACE_COLUMNS)
    with path.open("w", newline="") as handle:
        frame.to_csv(handle, index=False, lineterminator="\n")
    written = [path]

    for framework in sorted(table.frameworks(), key=lambda fw: fw.value):
        rows = [row for row in ordered if row.framework == framework]
        for metric in ("mae", "dme"):
            target = path.with_name(f"{path.stem}.{framework.value}.{metric}.dat")
            lines: List[str] = [f"# {framework.value} {metric}: learning_rate reg_magnitude value"]
            current = None
            for row in rows:
                if current is not None and row.learning_rate != current:
                    lines.append("")
                current = row.learning_rate
                value = getattr(row, metric)
                lines.append(
                    f"{_format(row.learning_rate)} {_format(row.reg_magnitude)} "
                    f"{_format(value) or 'NaN'}"
                )
            target.write_text("\n".join(lines) + "\n")
            written.append(target)
    logger.info(f"Wrote surface table with {len(ordered)} rows to {path}")
    return written


# ---------------------------------------------------------------------------
# Model text format
# ---------------------------------------------------------------------------

def _write_matrix(handle, name: str, matrix: np.ndarray) -> None:
    handle.write(f"[{name}]\n")
    for row in np.atleast_2d(matrix):
        handle.write(" ".join(f"{value:.17g}" for value in row) + "\n")


def save_model(model: FactorModel, path: Union[str, Path]) -> Path:
    """
    Save a model as diffable text: a header line `M N k framework`, then
    sections `[U]`, `[V]`, and framework coefficients, row-major, %.17g.
    """
    path = Path(path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    fw = model.framework
    with path.open("w") as handle:
        handle.write(f"# {MODEL_MAGIC}\n")
        handle.write(f"{model.num_users} {model.num_items} {model.k} {fw.tag.value}\n")
        _write_matrix(handle, "U", model.U)
        _write_matrix(handle, "V", model.V)
        if fw.tag == Framework.GLOBAL_SCALAR:
            _write_matrix(handle, "beta", np.array([[fw.beta, fw.item_beta]]))
        elif fw.tag == Framework.PER_VECTOR_SCALAR:
            _write_matrix(handle, "beta_i", fw.beta_i.reshape(1, -1))
            _write_matrix(handle, "gamma_j", fw.gamma_j.reshape(1, -1))
        elif fw.tag == Framework.VECTOR_DOT:
            _write_matrix(handle, "B", model.B)
            _write_matrix(handle, "G", model.G)
    return path


def _read_sections(lines: List[str]) -> Dict[str, List[List[float]]]:
    sections: Dict[str, List[List[float]]] = {}
    current = None
    for number, line in enumerate(lines, start=3):
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
            continue
        if current is None:
            raise DatasetFormatError("numbers before the first section", line=number)
        try:
            sections[current].append([float(token) for token in line.split()])
        except ValueError:
            raise DatasetFormatError("malformed number", line=number)
    return sections


def _matrix(sections: Dict[str, List[List[float]]], name: str, rows: int, cols: int) -> np.ndarray:
    if name not in sections:
        raise DatasetFormatError(f"model file lacks section [{name}]")
    values = sections[name]
    if rows == 0:
        return np.zeros((0, cols))
    matrix = np.array(values, dtype=np.float64)
    if matrix.shape != (rows, cols):
        raise DatasetFormatError(f"section [{name}] has shape {matrix.shape}, expected {(rows, cols)}")
    return matrix


def load_model(path: Union[str, Path]) -> FactorModel:
    path = Path(path).expanduser()
    if not path.exists():
        raise FileNotFoundError(f"Model file not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != f"# {MODEL_MAGIC}":
        raise DatasetFormatError(f"{path} is not a saved factor model", line=1)
    try:
        m, n, k, tag = lines[1].split()
        m, n, k = int(m), int(n), int(k)
        tag = Framework(tag)
    except (IndexError, ValueError):
        raise DatasetFormatError("malformed model header", line=2)

    sections = _read_sections(lines[2:])
    U = _matrix(sections, "U", m, k)
    V = _matrix(sections, "V", n, k)
    B = G = None
    if tag == Framework.GLOBAL_SCALAR:
        beta, beta_v = _matrix(sections, "beta", 1, 2)[0]
        framework = RegularizationFramework.global_scalar(beta, beta_v)
    elif tag == Framework.PER_VECTOR_SCALAR:
        framework = RegularizationFramework.per_vector_scalar(
            _matrix(sections, "beta_i", 1, m)[0], _matrix(sections, "gamma_j", 1, n)[0]
        )
    elif tag == Framework.VECTOR_DOT:
        framework = RegularizationFramework.vector_dot()
        B = _matrix(sections, "B", m, k)
        G = _matrix(sections, "G", n, k)
    else:
        framework = RegularizationFramework.none()
    return FactorModel(U=U, V=V, framework=framework, B=B, G=G)
