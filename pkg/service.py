import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from config import Config, get_config
from data import SplitPair, load_dataset, split, synthetic, write_canonical
from diagnostics import (
    implied_beta_norm_sq_report,
    implied_beta_spread,
    plug_in_framework,
    write_spread_csv,
)
from experiment import export_surface, framework_for, run_grid, surface_roughness
from factorization import FactorModel, RatingsDataset, RegularizationFramework
from metrics import evaluate
from models import EvalReport, Framework, GridSpec, Hyperparams, NormSqCheck, SpreadReport, SurfaceTable
from trainer import TrainResult, train

logger = logging.getLogger(__name__)


class ExperimentService:
    """
    Shared service that powers the CLI workflow.
    Handles dataset loading and splitting, training, evaluation and diagnostics.
    """

    def __init__(self, config: Optional[Config] = None):
        self.config = config or get_config()
        self._datasets: Dict[Tuple[str, str], RatingsDataset] = {}

    def output_path(self, name: str) -> Path:
        out_dir = Path(self.config.out_dir).expanduser()
        out_dir.mkdir(parents=True, exist_ok=True)
        return out_dir / name

    def ensure_dataset_loaded(self, path: str, preset: Optional[str] = None) -> RatingsDataset:
        """Load a ratings file once per (path, preset)"""
        preset = preset or self.config.preset
        key = (str(Path(path).expanduser().resolve()), preset)
        if key not in self._datasets:
            logger.info(f"Loading dataset {path} (preset {preset})")
            self._datasets[key] = load_dataset(path, preset)
        return self._datasets[key]

    def load_split(self, path: str, preset: Optional[str] = None,
                   ratio: Optional[float] = None, seed: Optional[int] = None) -> SplitPair:
        data = self.ensure_dataset_loaded(path, preset)
        ratio = self.config.split_ratio if ratio is None else ratio
        seed = self.config.seed if seed is None else seed
        return split(data, ratio, seed)

    def synthesize(self, num_users: int, num_items: int, k_true: int, density: float,
                   noise_std: float, output: Optional[str] = None) -> Path:
        data = synthetic(num_users, num_items, k_true, density, noise_std, self.config.seed)
        target = Path(output).expanduser() if output else self.output_path("synthetic.csv")
        write_canonical(data, target)
        logger.info(f"Wrote {data.num_observations} synthetic ratings to {target}")
        return target

    def train(self, pair: SplitPair, h: Hyperparams, tag: Framework, magnitude: float,
              plug_in: bool = False) -> TrainResult:
        """Train one model on the train part of a split"""
        return self.fit(pair.train, h, tag, magnitude, plug_in=plug_in)

    def fit(self, data: RatingsDataset, h: Hyperparams, tag: Framework, magnitude: float,
            plug_in: bool = False) -> TrainResult:
        """
        Train one model on every rating of `data`.

        With plug_in, a GLOBAL_SCALAR warm-up run at the same magnitude
        supplies implied per-user coefficients for a PER_VECTOR_SCALAR run.
        """
        if tag == Framework.VECTOR_DOT:
            h = h.model_copy(update={"init_reg_value": magnitude})
        if plug_in:
            if tag != Framework.PER_VECTOR_SCALAR:
                raise ValueError("--plug-in only applies to the per_vector_scalar framework")
            warm_up = train(data, h, RegularizationFramework.global_scalar(magnitude))
            framework = plug_in_framework(warm_up.model, data)
            logger.info(
                f"Plug-in coefficients: mean beta_i={framework.beta_i.mean():.4g}, "
                f"gamma={framework.gamma_j[0] if framework.gamma_j.size else 0.0:.4g}"
            )
        else:
            framework = framework_for(tag, magnitude, data.num_users, data.num_items)
        return train(data, h, framework)

    def evaluate(self, model: FactorModel, pair: SplitPair, k_top: Optional[int] = None,
                 clamp: Optional[bool] = None) -> EvalReport:
        return evaluate(
            model,
            pair.train,
            pair.test,
            k_top=self.config.k_top if k_top is None else k_top,
            clamp=self.config.clamp if clamp is None else clamp,
        )

    def diagnose(self, model: FactorModel, data: RatingsDataset,
                 printed_sign: bool = False) -> Tuple[SpreadReport, List[NormSqCheck], Path]:
        report = implied_beta_spread(model, data, printed_sign=printed_sign)
        checks: List[NormSqCheck] = []
        if model.framework.tag == Framework.VECTOR_DOT:
            checks = implied_beta_norm_sq_report(model, data)
        path = write_spread_csv(report, self.output_path("implied_beta.csv"))
        logger.info(
            f"Implied beta over {report.num_users} users: std={report.std:.6g}, "
            f"range=[{report.min:.6g}, {report.max:.6g}]"
        )
        return report, checks, path

    def run_grid(self, spec: GridSpec) -> Tuple[SurfaceTable, Dict[Framework, Optional[float]], List[Path]]:
        table = run_grid(spec, threads=self.config.threads)
        roughness = {fw: surface_roughness(table, fw) for fw in table.frameworks()}
        for framework, value in roughness.items():
            logger.info(f"{framework.value}: surface roughness {value}")
        written = export_surface(table, self.output_path("surface.csv"))
        return table, roughness, written
