import hashlib
from enum import StrEnum
from pathlib import Path
from typing import Annotated, Any, Optional

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    model_validator,
)
from scipy.optimize import linear_sum_assignment

from .errors import DegenerateMarketError, DimensionMismatchError, StateCorruptionError


def _float_vector(value: Any) -> np.ndarray:
    array = np.array(value, dtype=np.float64)
    if array.ndim != 1:
        raise ValueError("expected a one-dimensional vector")
    if not np.all(np.isfinite(array)):
        raise ValueError("vector entries must be finite")
    array.setflags(write=False)
    return array


def _int_vector(value: Any) -> np.ndarray:
    raw = np.array(value)
    if raw.ndim != 1:
        raise ValueError("expected a one-dimensional vector")
    if raw.size and raw.dtype.kind not in "iub":
        if raw.dtype.kind != "f" or not np.all(raw == np.round(raw)):
            raise ValueError("expected integer entries")
    array = raw.astype(np.int64)
    array.setflags(write=False)
    return array


def _bool_vector(value: Any) -> np.ndarray:
    array = np.array(value, dtype=bool)
    if array.ndim != 1:
        raise ValueError("expected a one-dimensional vector")
    array.setflags(write=False)
    return array


def _float_matrix(value: Any) -> np.ndarray:
    array = np.array(value, dtype=np.float64)
    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(array)):
        raise ValueError("matrix entries must be finite")
    array.setflags(write=False)
    return array


def _float_table(value: Any) -> np.ndarray:
    array = np.array(value, dtype=np.float64)
    if array.ndim != 2:
        raise ValueError("expected a two-dimensional table")
    array.setflags(write=False)
    return array


def _to_list(array: np.ndarray) -> list:
    return array.tolist()


FloatVector = Annotated[
    np.ndarray, BeforeValidator(_float_vector), PlainSerializer(_to_list, return_type=list)
]
IntVector = Annotated[
    np.ndarray, BeforeValidator(_int_vector), PlainSerializer(_to_list, return_type=list)
]
BoolVector = Annotated[
    np.ndarray, BeforeValidator(_bool_vector), PlainSerializer(_to_list, return_type=list)
]
SquareMatrix = Annotated[
    np.ndarray, BeforeValidator(_float_matrix), PlainSerializer(_to_list, return_type=list)
]
FloatTable = Annotated[
    np.ndarray, BeforeValidator(_float_table), PlainSerializer(_to_list, return_type=list)
]


class InformationCondition(StrEnum):
    SOCIAL_INFLUENCE = "si"
    INDEPENDENT = "in"


class PolicyKind(StrEnum):
    DOWNLOAD_RANK = "d-rank"
    PERFORMANCE_RANK = "p-rank"
    RANDOM_RANK = "rand-rank"


class QualitySource(StrEnum):
    TRUE = "true"
    ESTIMATED = "estimated"


class InfluenceTransform(StrEnum):
    IDENTITY = "identity"
    LOG = "log"
    SQRT = "sqrt"


class ScenarioKind(StrEnum):
    GAUSSIAN = "gaussian"
    NEGATIVE_CORRELATION = "negative-correlation"
    EXPLICIT = "explicit"


class SolverMethod(StrEnum):
    PARAMETRIC = "parametric"
    LFAP = "lfap"


class Market(BaseModel):
    """Fixed song parameters: appeal, quality, position visibility and influence."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True, extra="forbid")

    appeal: FloatVector
    quality: FloatVector
    visibility: FloatVector
    alpha: float = Field(1.0, gt=0)
    influence_transform: InfluenceTransform = InfluenceTransform.IDENTITY

    @model_validator(mode="after")
    def _check_invariants(self) -> "Market":
        n = self.appeal.size
        if n == 0:
            raise DimensionMismatchError("a market needs at least one song")
        if self.quality.size != n or self.visibility.size != n:
            raise DimensionMismatchError(
                f"appeal, quality and visibility lengths differ: "
                f"{n}, {self.quality.size}, {self.visibility.size}"
            )
        if np.any(self.quality < 0) or np.any(self.quality > 1):
            raise ValueError("quality values must lie in [0, 1]")
        if np.any(self.appeal < 0):
            raise ValueError("appeal values must be nonnegative")
        if not np.any(self.appeal > 0):
            raise DegenerateMarketError("at least one song needs positive appeal")
        if np.any(self.visibility <= 0):
            raise ValueError("visibility values must be positive")
        return self

    @property
    def n(self) -> int:
        return int(self.appeal.size)


class MarketState(BaseModel):
    """Download and sampling counts at iteration `step`."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    downloads: IntVector
    samples: IntVector
    step: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_counts(self) -> "MarketState":
        if self.downloads.size != self.samples.size:
            raise DimensionMismatchError("downloads and samples lengths differ")
        if np.any(self.downloads < 0) or np.any(self.samples < 0):
            raise ValueError("counts must be nonnegative")
        if np.any(self.downloads > self.samples):
            raise StateCorruptionError("a song has more downloads than samplings")
        return self

    @classmethod
    def initial(cls, n: int) -> "MarketState":
        """Cold-start state with every count at zero."""
        zeros = np.zeros(n, dtype=np.int64)
        return cls(downloads=zeros, samples=zeros, step=0)

    @property
    def n(self) -> int:
        return int(self.downloads.size)


def _require_permutation(values: np.ndarray) -> None:
    if values.ndim != 1 or not np.array_equal(np.sort(values), np.arange(values.size)):
        raise ValueError("expected a permutation of 0..n-1")


class Ranking(BaseModel):
    """A ranking (song -> position) together with its playlist (position -> song)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    position_of: IntVector
    song_at: IntVector

    @model_validator(mode="after")
    def _check_bijection(self) -> "Ranking":
        n = self.position_of.size
        if self.song_at.size != n:
            raise DimensionMismatchError("position_of and song_at lengths differ")
        _require_permutation(self.song_at)
        _require_permutation(self.position_of)
        if not np.array_equal(self.song_at[self.position_of], np.arange(n)):
            raise ValueError("position_of is not the inverse of song_at")
        return self

    @classmethod
    def from_playlist(cls, song_at: Any, validate: bool = True) -> "Ranking":
        playlist = np.asarray(song_at, dtype=np.int64)
        if validate:
            _require_permutation(playlist)
        position_of = np.empty_like(playlist)
        position_of[playlist] = np.arange(playlist.size)
        if not validate:
            playlist = playlist.copy()
            playlist.setflags(write=False)
            position_of.setflags(write=False)
            return cls.model_construct(position_of=position_of, song_at=playlist)
        return cls(position_of=position_of, song_at=playlist)

    @classmethod
    def from_positions(cls, position_of: Any) -> "Ranking":
        positions = np.asarray(position_of, dtype=np.int64)
        _require_permutation(positions)
        song_at = np.empty_like(positions)
        song_at[positions] = np.arange(positions.size)
        return cls(position_of=positions, song_at=song_at)

    @classmethod
    def identity(cls, n: int) -> "Ranking":
        return cls.from_playlist(np.arange(n))

    @property
    def n(self) -> int:
        return int(self.song_at.size)

    def digest(self) -> str:
        """Stable short digest of the playlist."""
        payload = self.song_at.astype("<i8").tobytes()
        return hashlib.sha1(payload).hexdigest()[:16]


class AttractionVector(BaseModel):
    """Per-song attraction a_i = alpha * A_i + f(D_i)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: FloatVector

    @model_validator(mode="after")
    def _check_values(self) -> "AttractionVector":
        if np.any(self.values < 0):
            raise ValueError("attraction values must be nonnegative")
        if not np.any(self.values > 0):
            raise DegenerateMarketError("every song has zero attraction")
        return self

    @property
    def n(self) -> int:
        return int(self.values.size)


class LfapInstance(BaseModel):
    """Minimize sum(cost) / sum(weight) over perfect matchings of rows to columns."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    cost: SquareMatrix
    weight: SquareMatrix

    @model_validator(mode="after")
    def _check_weights(self) -> "LfapInstance":
        if self.cost.shape != self.weight.shape:
            raise DimensionMismatchError("cost and weight shapes differ")
        if np.any(self.weight < 0):
            raise ValueError("weights must be nonnegative")
        rows, cols = linear_sum_assignment(self.weight)
        if self.weight[rows, cols].sum() <= 0:
            raise DegenerateMarketError("some perfect matching has zero total weight")
        return self

    @property
    def n(self) -> int:
        return int(self.cost.shape[0])

    def ratio(self, matching: np.ndarray) -> float:
        rows = np.arange(self.n)
        return float(self.cost[rows, matching].sum() / self.weight[rows, matching].sum())


class LfapSolution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    matching: IntVector
    objective: float
    iterates: list[float] = Field(default_factory=list)


class ParametricSolution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    ranking: Ranking
    objective: float
    iterates: list[float] = Field(default_factory=list)


class PolicySpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: PolicyKind = PolicyKind.PERFORMANCE_RANK
    condition: InformationCondition = InformationCondition.SOCIAL_INFLUENCE
    quality_source: QualitySource = QualitySource.ESTIMATED

    @property
    def label(self) -> str:
        """Short label such as `p-rank(si)`; P-rank on true quality gets a `[true-q]` suffix."""
        label = f"{self.kind.value}({self.condition.value})"
        if self.kind == PolicyKind.PERFORMANCE_RANK and self.quality_source == QualitySource.TRUE:
            label += "[true-q]"
        return label


class QualityEstimate(BaseModel):
    """Pre-sampled quality estimate; `successes` counts Bernoulli successes out of `m`."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    successes: FloatVector
    m: int = Field(..., ge=1)
    current: FloatVector

    @model_validator(mode="after")
    def _check_ranges(self) -> "QualityEstimate":
        if self.current.size != self.successes.size:
            raise DimensionMismatchError("successes and current lengths differ")
        if np.any(self.successes < 0) or np.any(self.successes > self.m):
            raise ValueError("successes must lie in [0, m]")
        if np.any(self.current < 0) or np.any(self.current > 1):
            raise ValueError("estimates must lie in [0, 1]")
        return self

    @property
    def q0(self) -> np.ndarray:
        return self.successes / self.m


class SimulationConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_iterations: int = Field(20_000, gt=0)
    refresh_rate: int = Field(1, ge=1)
    policy: PolicySpec = PolicySpec()
    n_worlds: int = Field(400, gt=0)
    master_seed: int = Field(0, ge=0, lt=2**64)
    record_granularity: int = Field(100, gt=0)
    initial_sample_size: int = Field(10, ge=1)

    @model_validator(mode="after")
    def _check_refresh(self) -> "SimulationConfig":
        if self.refresh_rate > self.n_iterations:
            raise ValueError("refresh_rate must not exceed n_iterations")
        return self


class Snapshot(BaseModel):
    """Counts, playlist in force and quality estimates at one recorded step."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    step: int = Field(..., ge=0)
    downloads: IntVector
    samples: IntVector
    song_at: IntVector
    estimates: FloatVector

    @property
    def total_downloads(self) -> int:
        return int(self.downloads.sum())

    @property
    def total_samples(self) -> int:
        return int(self.samples.sum())

    @property
    def ranking(self) -> Ranking:
        return Ranking.from_playlist(self.song_at)


class WorldTrace(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    world_id: int = Field(..., ge=0)
    snapshots: list[Snapshot]
    final_state: MarketState
    sampled_songs: Optional[IntVector] = None
    downloaded: Optional[BoolVector] = None

    @model_validator(mode="after")
    def _check_snapshots(self) -> "WorldTrace":
        steps = [snapshot.step for snapshot in self.snapshots]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("snapshot steps must be strictly increasing")
        totals = [snapshot.total_downloads for snapshot in self.snapshots]
        if any(b < a for a, b in zip(totals, totals[1:])):
            raise ValueError("download totals must be nondecreasing")
        return self

    @property
    def steps(self) -> np.ndarray:
        return np.array([snapshot.step for snapshot in self.snapshots], dtype=np.int64)

    @property
    def final_downloads(self) -> np.ndarray:
        return self.final_state.downloads

    @property
    def estimate_trajectory(self) -> np.ndarray:
        """Estimates per snapshot, shape (snapshots, n)."""
        return np.vstack([snapshot.estimates for snapshot in self.snapshots])


class ScenarioSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: ScenarioKind = ScenarioKind.GAUSSIAN
    n: int = Field(50, ge=1)
    seed: int = Field(0, ge=0)
    alpha: float = Field(1.0, gt=0)
    influence_transform: InfluenceTransform = InfluenceTransform.IDENTITY
    visibility_exponent: float = Field(0.8, gt=0)
    bottom_uptick: Optional[int] = Field(None, ge=0)
    uptick_factor: float = Field(1.2, gt=0)
    jitter: float = Field(0.05, ge=0)
    appeal: Optional[list[float]] = None
    quality: Optional[list[float]] = None
    visibility: Optional[list[float]] = None

    @model_validator(mode="after")
    def _check_explicit(self) -> "ScenarioSpec":
        vectors = (self.appeal, self.quality, self.visibility)
        if self.kind == ScenarioKind.EXPLICIT:
            if self.appeal is None or self.quality is None:
                raise ValueError("explicit scenarios need appeal and quality vectors")
        elif any(vector is not None for vector in vectors):
            raise ValueError(f"{self.kind.value} scenarios are generated; drop literal vectors")
        return self


class ScenarioFile(BaseModel):
    """Generated or explicit market together with the spec that produced it."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    spec: ScenarioSpec
    market: Market


class RankRequest(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    appeal: list[float]
    quality: list[float]
    visibility: list[float]
    downloads: Optional[list[int]] = None
    alpha: float = Field(1.0, gt=0)
    influence_transform: InfluenceTransform = InfluenceTransform.IDENTITY
    condition: InformationCondition = InformationCondition.SOCIAL_INFLUENCE


class EmitFlags(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    traces: bool = True
    metrics: bool = True
    plot_data: bool = True
    telemetry: bool = False


class OutputOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    directory: Optional[Path] = None
    emit: EmitFlags = EmitFlags()
    top_k: int = Field(10, ge=1)


class ExperimentConfig(BaseModel):
    """A validated experiment file; `policy` overrides `simulation.policy`."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    scenario: ScenarioSpec = ScenarioSpec()
    scenario_file: Optional[Path] = None
    simulation: SimulationConfig = SimulationConfig()
    policy: Optional[PolicySpec] = None
    output: OutputOptions = OutputOptions()
    compare: list[PolicySpec] = Field(default_factory=list)

    @property
    def resolved_simulation(self) -> SimulationConfig:
        if self.policy is None:
            return self.simulation
        return self.simulation.model_copy(update={"policy": self.policy})


class TrajectoryPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    step: int
    mean_downloads: float
    ci_low: float
    ci_high: float


class RunSummary(BaseModel):
    """Self-describing result of one `simulate` run."""

    model_config = ConfigDict(frozen=True)

    config: dict[str, Any]
    market: Market
    policy: str
    n_worlds: int
    n_iterations: int
    trajectory: list[TrajectoryPoint]
    final_downloads: list[list[int]]
    generated_at: str = ""


class MarketShares(BaseModel):
    """Final market share of every song (columns) in every world (rows)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    shares: FloatTable
    world_ids: IntVector

    @model_validator(mode="after")
    def _check_rows(self) -> "MarketShares":
        if self.shares.shape[0] != self.world_ids.size:
            raise DimensionMismatchError("one world id is needed per share row")
        if np.any(self.shares < 0):
            raise ValueError("market shares must be nonnegative")
        if not np.allclose(self.shares.sum(axis=1), 1.0, rtol=0.0, atol=1e-9):
            raise ValueError("market shares of a world must sum to one")
        return self

    @property
    def n_worlds(self) -> int:
        return int(self.shares.shape[0])


class UnpredictabilityReport(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    per_song: FloatVector
    overall: float
