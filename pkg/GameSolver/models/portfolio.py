"""
Portfolio model: market, investor costs and the worst-case strategy report.

The market is the maximizing player: it picks the continuous composition and may impulse on the
wealth; the investor is the minimizing player and rebalances by impulses. The game value is the
investor's worst-case discounted cost.
"""

from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from GameSolver.models.game import DampingSpec

WEIGHT_SUM_TOLERANCE = 1e-12


class ReturnCurveSpec(BaseModel):
    """Instantaneous return r_i(s): a constant ``rate`` or a piecewise-linear table."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    rate: Optional[float] = None
    times: Optional[List[float]] = None
    rates: Optional[List[float]] = None

    @model_validator(mode="after")
    def _one_form(self):
        tabulated = self.times is not None or self.rates is not None
        if (self.rate is None) == (not tabulated):
            raise ValueError("give either a constant rate or times and rates")
        if tabulated:
            if self.times is None or self.rates is None or len(self.times) != len(self.rates) or not self.times:
                raise ValueError("times and rates must be non-empty lists of the same length")
            if any(b <= a for a, b in zip(self.times, self.times[1:])):
                raise ValueError("times must be strictly increasing")
        return self


class MarketModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    return_curves: List[ReturnCurveSpec] = Field(min_length=1)
    # only used for reporting
    price_normalization: Optional[List[float]] = None

    @property
    def num_stocks(self) -> int:
        return len(self.return_curves)

    @model_validator(mode="after")
    def _check_prices(self):
        if self.price_normalization is not None:
            if len(self.price_normalization) != self.num_stocks:
                raise ValueError("price_normalization needs one entry per stock")
            if any(p <= 0 for p in self.price_normalization):
                raise ValueError("price_normalization entries must be positive")
        return self


class FixedPlusProportionalCost(BaseModel):
    """kappa0 + kappa1 * w"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    fixed: float = Field(gt=0)
    proportional: float = Field(default=0.0, ge=0)


class HoldingCostSpec(BaseModel):
    """l(w) = coefficient * w^2 (quadratic) or coefficient * w (linear)"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["quadratic", "linear"] = "quadratic"
    coefficient: float = 0.0


class UtilitySpec(BaseModel):
    """u(w) = coefficient * log(w) (log, clipped at the wealth floor) or coefficient * w (linear)"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["log", "linear"] = "log"
    coefficient: float = 0.0


class TerminalCostSpec(BaseModel):
    """G(w) = a + b*w + c*w^2"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    a: float = 0.0
    b: float = 0.0
    c: float = 0.0


def _check_weights(grid: List[List[float]], size: int, name: str):
    if not grid:
        raise ValueError(f"{name} must not be empty")
    for row in grid:
        if len(row) != size:
            raise ValueError(f"{name} rows need {size} weights")
        if abs(sum(row) - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ValueError(f"{name} row {row} does not sum to 1")


class PortfolioProblem(BaseModel):
    """
    [portfolio.problem] section.

    ``weight_grid`` (or the simplex of resolution ``weight_resolution``) is shared by the
    continuous composition and both impulse roles unless ``market_weight_grid`` or
    ``investor_weight_grid`` is given. ``market_cost`` and ``investor_cost`` default to
    ``transaction_cost``. ``jump_increment`` defaults to the solver step.
    """
    model_config = ConfigDict(extra="forbid")

    name: str = "portfolio"
    market: MarketModel
    weight_grid: Optional[List[List[float]]] = None
    weight_resolution: Optional[int] = Field(default=None, ge=1)
    market_weight_grid: Optional[List[List[float]]] = None
    investor_weight_grid: Optional[List[List[float]]] = None
    holding_cost: HoldingCostSpec = Field(default_factory=HoldingCostSpec)
    utility: UtilitySpec = Field(default_factory=UtilitySpec)
    transaction_cost: FixedPlusProportionalCost
    market_cost: Optional[FixedPlusProportionalCost] = None
    investor_cost: Optional[FixedPlusProportionalCost] = None
    terminal_cost: TerminalCostSpec = Field(default_factory=TerminalCostSpec)
    market_impulses_enabled: bool = True
    jump_increment: Optional[float] = Field(default=None, gt=0)
    initial_wealth: float = Field(gt=0)
    discount: float = Field(gt=0)
    horizon: Tuple[float, float]
    damping: DampingSpec = Field(default_factory=DampingSpec)

    @model_validator(mode="after")
    def _check_grids(self):
        if (self.weight_grid is None) == (self.weight_resolution is None):
            raise ValueError("give exactly one of weight_grid and weight_resolution")
        n = self.market.num_stocks
        for name in ("weight_grid", "market_weight_grid", "investor_weight_grid"):
            grid = getattr(self, name)
            if grid is not None:
                _check_weights(grid, n, name)
        return self


class CompositionStep(BaseModel):
    """One row of the strategy timeline."""
    time: float
    wealth: float
    regime: str
    weights: Optional[List[float]] = None
    value: Optional[float] = None


class PortfolioImpulse(BaseModel):
    time: float
    weights: List[float]


class PortfolioStrategyReport(BaseModel):
    """Worst-case strategy Pi*(s) and the investor's maximal lost v(t, w)."""
    initial_wealth: float
    worst_case_value: float
    payoff: Optional[float]
    timeline: List[CompositionStep]
    market_impulses: List[PortfolioImpulse] = Field(default_factory=list)
    investor_impulses: List[PortfolioImpulse] = Field(default_factory=list)
    truncated: bool = False
    diagnostic: Optional[str] = None
