"""
Result export: CSV tables, JSON documents, plot-ready long tables and optional PNG renderings.

CSV files are comma separated with a header row and LF line endings; floats carry 17 significant
digits so that re-imported fields are bit-identical. JSON is UTF-8 with sorted keys.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from GameSolver.models.game import GameProblem
from GameSolver.models.grid import BoundaryPolicy, Regime, TimeSpaceGrid, ValueField
from GameSolver.models.portfolio import PortfolioStrategyReport
from GameSolver.models.run import RunManifest
from GameSolver.models.solver import RefinementReport, SolveReport
from GameSolver.models.strategy import NashStrategy, NEReport, TrajectoryRecord
from GameSolver.services.grid_service import GridService
from GameSolver.services.operator_service import OperatorService
from GameSolver.utils.errors import ConfigurationError
from GameSolver.utils.logger import get_logger

logger = get_logger(__name__)

FLOAT_FORMAT = "%.17g"


def _json_default(value: Any):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _space_columns(grid: TimeSpaceGrid) -> List[str]:
    return [f"y{d}" for d in range(grid.state_dim)]


class ExportService:
    """Service class for writing and reading run artifacts."""

    @staticmethod
    def write_json(path: Path, payload: Any) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            json.dump(payload, handle, sort_keys=True, indent=2, ensure_ascii=False, default=_json_default)
            handle.write("\n")
        return path

    @staticmethod
    def write_frame(path: Path, frame: pd.DataFrame) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return path

    # ------------------------------------------------------------------
    # Value fields
    # ------------------------------------------------------------------

    @staticmethod
    def value_field_frame(field: ValueField) -> pd.DataFrame:
        """Long format: one row per (time node, space node)."""
        grid = field.grid
        I, J = grid.num_times, grid.num_nodes
        frame = pd.DataFrame({"s": np.repeat(grid.time_nodes, J)})
        nodes = np.tile(grid.nodes, (I, 1))
        for d, column in enumerate(_space_columns(grid)):
            frame[column] = nodes[:, d]
        frame["V"] = field.values.reshape(-1)
        frame["regime"] = field.regime.reshape(-1)
        frame["theta_index"] = field.theta_index.reshape(-1)
        frame["xi_index"] = field.xi_index.reshape(-1)
        frame["eta_index"] = field.eta_index.reshape(-1)
        return frame

    @staticmethod
    def value_field_metadata(report: SolveReport, problem: GameProblem) -> Dict[str, Any]:
        field = report.value_field
        return {
            "grid": field.grid.describe(),
            "h": field.grid.h,
            "damping": report.damping,
            "tolerance": report.tolerance,
            "clamped": field.clamped,
            "problem": problem.summary(),
        }

    @staticmethod
    def write_value_field(field: ValueField, directory: Path, metadata: Dict[str, Any],
                          stem: str = "value_field") -> List[Path]:
        """Write ``<stem>.csv`` and its ``<stem>.meta.json`` sidecar."""
        directory = Path(directory)
        csv_path = ExportService.write_frame(directory / f"{stem}.csv", ExportService.value_field_frame(field))
        meta_path = ExportService.write_json(directory / f"{stem}.meta.json", metadata)
        logger.debug(f"Wrote value field to {csv_path}")
        return [csv_path, meta_path]

    @staticmethod
    def read_value_field(csv_path: Path, meta_path: Optional[Path] = None) -> ValueField:
        """
        Re-import a value field written by ``write_value_field``.

        Raises:
            ConfigurationError: If the table does not match its metadata
        """
        csv_path = Path(csv_path)
        meta_path = Path(meta_path) if meta_path else csv_path.with_name(csv_path.stem + ".meta.json")
        with open(meta_path, "r", encoding="utf-8") as handle:
            meta = json.load(handle)
        spec = meta["grid"]
        grid = GridService.build_grid(
            tuple(spec["horizon"]),
            spec["h"],
            [(axis["lo"], axis["hi"], axis["count"]) for axis in spec["space"]],
            BoundaryPolicy(spec["boundary_policy"]),
        )
        frame = pd.read_csv(csv_path, float_precision="round_trip", keep_default_na=False)
        shape = (grid.num_times, grid.num_nodes)
        if len(frame) != shape[0] * shape[1]:
            raise ConfigurationError(f"{csv_path} has {len(frame)} rows, metadata expects {shape[0] * shape[1]}")
        return ValueField(
            grid=grid,
            values=frame["V"].to_numpy(dtype=float).reshape(shape),
            theta_index=frame["theta_index"].to_numpy(dtype=int).reshape(shape),
            xi_index=frame["xi_index"].to_numpy(dtype=int).reshape(shape),
            eta_index=frame["eta_index"].to_numpy(dtype=int).reshape(shape),
            regime=frame["regime"].to_numpy(dtype=object).reshape(shape),
            clamped=bool(meta.get("clamped", False)),
        )

    @staticmethod
    def write_candidates(report: SolveReport, directory: Path) -> Path:
        """Continuous, minimizer and maximizer candidate values with their policies."""
        grid = report.value_field.grid
        frame = ExportService.value_field_frame(report.value_field)[["s"] + _space_columns(grid)]
        cand = report.candidates
        for name in ("continuous", "continuous_policy", "min_value", "min_policy", "max_value", "max_policy"):
            frame[name] = getattr(cand, name).reshape(-1)
        return ExportService.write_frame(Path(directory) / "candidates.csv", frame)

    @staticmethod
    def write_solve_report(report: SolveReport, directory: Path) -> Path:
        return ExportService.write_json(Path(directory) / "solve_report.json", report.summary())

    @staticmethod
    def residual_frame(problem: GameProblem, report: SolveReport) -> pd.DataFrame:
        """Residual components at every non-terminal node."""
        field = report.value_field
        grid = field.grid
        frames = []
        for i in range(grid.num_times - 1):
            r = OperatorService.obstacle_residuals(problem, grid, field, float(grid.time_nodes[i]))
            frame = pd.DataFrame({"s": np.full(grid.num_nodes, grid.time_nodes[i])})
            for d, column in enumerate(_space_columns(grid)):
                frame[column] = grid.nodes[:, d]
            frame["hjb"], frame["lower_gap"] = r.hjb, r.lower_gap
            frame["upper_gap"], frame["composite"] = r.upper_gap, r.composite
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)

    @staticmethod
    def write_residuals(problem: GameProblem, report: SolveReport, directory: Path) -> Path:
        return ExportService.write_frame(
            Path(directory) / "residuals.csv", ExportService.residual_frame(problem, report)
        )

    @staticmethod
    def write_convergence(report: SolveReport, directory: Path) -> Path:
        """Per-iteration change of the published-value iteration, one row per (slice, iteration)."""
        rows = [
            {"slice": s.index, "s": s.time, "iteration": k + 1, "change": change}
            for s in report.slices for k, change in enumerate(s.residual_history)
        ]
        frame = pd.DataFrame.from_records(rows, columns=["slice", "s", "iteration", "change"])
        return ExportService.write_frame(Path(directory) / "convergence.csv", frame)

    # ------------------------------------------------------------------
    # Strategies and audits
    # ------------------------------------------------------------------

    @staticmethod
    def timeline_frame(strategy: NashStrategy, record: TrajectoryRecord) -> pd.DataFrame:
        """s, regime, theta*/xi*/eta*, y*, V* per path node."""
        max_at = {e.time: e.index for e in strategy.max_impulses if not e.placeholder}
        min_at = {e.time: e.index for e in strategy.min_impulses if not e.placeholder}
        rows = []
        for i, state in enumerate(record.states):
            s = record.times[i]
            regime = record.regimes[i] if i < len(record.regimes) else Regime.TERMINAL.value
            row = {
                "s": s,
                "regime": regime,
                "theta_index": strategy.continuous_timeline[i] if i < len(strategy.continuous_timeline) else None,
                "xi_index": max_at.get(s) if regime == Regime.MAX_IMPULSE.value else None,
                "eta_index": min_at.get(s) if regime == Regime.MIN_IMPULSE.value else None,
            }
            for d, y in enumerate(state):
                row[f"y{d}"] = y
            row["V"] = record.values[i] if i < len(record.values) else None
            rows.append(row)
        frame = pd.DataFrame.from_records(rows)
        for column in ("theta_index", "xi_index", "eta_index"):
            frame[column] = frame[column].astype("Int64")
        return frame

    @staticmethod
    def write_strategy(strategy: NashStrategy, record: TrajectoryRecord, directory: Path) -> List[Path]:
        directory = Path(directory)
        return [
            ExportService.write_json(directory / "strategy.json", strategy.model_dump()),
            ExportService.write_json(directory / "trajectory.json", record.model_dump()),
            ExportService.write_frame(directory / "timeline.csv", ExportService.timeline_frame(strategy, record)),
        ]

    @staticmethod
    def write_ne_report(report: NEReport, directory: Path) -> Path:
        return ExportService.write_json(Path(directory) / "ne_report.json", report.model_dump())

    @staticmethod
    def write_refinement(report: RefinementReport, directory: Path) -> List[Path]:
        directory = Path(directory)
        frame = pd.DataFrame.from_records([row.model_dump() for row in report.rows])
        return [
            ExportService.write_frame(directory / "refinement.csv", frame),
            ExportService.write_json(directory / "refinement.json", report.model_dump()),
        ]

    @staticmethod
    def write_portfolio(report: PortfolioStrategyReport, directory: Path) -> List[Path]:
        """Timeline (s, w*, regime, active weights, V*) and the JSON summary."""
        directory = Path(directory)
        size = max((len(step.weights) for step in report.timeline if step.weights), default=0)
        rows = []
        for step in report.timeline:
            row = {"s": step.time, "wealth": step.wealth, "regime": step.regime}
            for k in range(size):
                row[f"w{k}"] = step.weights[k] if step.weights else None
            row["V"] = step.value
            rows.append(row)
        return [
            ExportService.write_frame(directory / "portfolio_timeline.csv", pd.DataFrame.from_records(rows)),
            ExportService.write_json(directory / "portfolio_summary.json", report.model_dump()),
        ]

    # ------------------------------------------------------------------
    # Plot data
    # ------------------------------------------------------------------

    @staticmethod
    def write_plot_data(problem: GameProblem, report: SolveReport, directory: Path,
                        record: Optional[TrajectoryRecord] = None) -> List[Path]:
        """Long-format tables: value surface per slice, path overlay and residual heatmap."""
        directory = Path(directory) / "plots"
        grid = report.value_field.grid
        space = _space_columns(grid)
        surface = ExportService.value_field_frame(report.value_field)[["s"] + space + ["V"]]
        heatmap = ExportService.residual_frame(problem, report)[["s"] + space + ["composite"]]
        paths = [
            ExportService.write_frame(directory / "value_surface.csv", surface),
            ExportService.write_frame(directory / "residual_heatmap.csv", heatmap),
        ]
        if record is not None:
            overlay = pd.DataFrame({"s": record.times})
            states = np.asarray(record.states, dtype=float)
            for d, column in enumerate(space):
                overlay[column] = states[:, d]
            overlay["V"] = list(record.values) + [None] * (len(record.times) - len(record.values))
            paths.append(ExportService.write_frame(directory / "path_overlay.csv", overlay))
        return paths

    @staticmethod
    def render_images(problem: GameProblem, report: SolveReport, directory: Path,
                      record: Optional[TrajectoryRecord] = None) -> List[Path]:
        """Static PNG line and heatmap images for one-dimensional problems; nothing otherwise."""
        grid = report.value_field.grid
        if grid.state_dim != 1:
            logger.info("Image rendering is available for one-dimensional grids only")
            return []
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        directory = Path(directory) / "plots"
        directory.mkdir(parents=True, exist_ok=True)
        y = grid.space_axes[0]
        values = report.value_field.values
        paths: List[Path] = []

        fig, ax = plt.subplots(figsize=(8, 5))
        for i, s in enumerate(grid.time_nodes):
            ax.plot(y, values[i], label=f"s = {s:.4g}")
        ax.set_xlabel("y")
        ax.set_ylabel("v_h(s, y)")
        ax.grid(alpha=0.3)
        if grid.num_times <= 12:
            ax.legend()
        fig.tight_layout()
        paths.append(directory / "value_surface.png")
        fig.savefig(paths[-1], dpi=150)
        plt.close(fig)

        residual = ExportService.residual_frame(problem, report)["composite"].to_numpy()
        residual = residual.reshape(grid.num_times - 1, grid.num_nodes)
        fig, ax = plt.subplots(figsize=(8, 5))
        mesh = ax.pcolormesh(y, grid.time_nodes[:-1], residual, shading="nearest")
        fig.colorbar(mesh, ax=ax, label="composite residual")
        if record is not None:
            states = np.asarray(record.states, dtype=float)[:, 0]
            ax.plot(states[:len(record.times) - 1], record.times[:len(record.times) - 1], "w.-", label="path")
            ax.legend()
        ax.set_xlabel("y")
        ax.set_ylabel("s")
        fig.tight_layout()
        paths.append(directory / "residual_heatmap.png")
        fig.savefig(paths[-1], dpi=150)
        plt.close(fig)
        return paths

    @staticmethod
    def write_manifest(manifest: RunManifest, directory: Path) -> Path:
        return ExportService.write_json(Path(directory) / "manifest.json", manifest.model_dump())

    @staticmethod
    def relative(paths: List[Path], directory: Path) -> List[str]:
        """Sorted output paths relative to the output directory, as listed in the manifest."""
        root = Path(directory).resolve()
        return sorted(str(Path(p).resolve().relative_to(root)) for p in paths)
