"""Data models used by the location-verification protocol simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, MutableMapping, Optional, Tuple

from typing_extensions import Literal

from ..config import SPEED_OF_LIGHT
from ..errors import ConfigurationError, ProtocolCorruptionError, ValidationError
from ..quantum.channels import DAMPING_FAMILIES, ChannelSpec, scalar_fidelity

ALICE = "A"
DEVICE = "C"
CLONING_BOUND = 0.7
DEFAULT_TIMING_TOLERANCE = 1e-6
DEFAULT_CHALLENGE_INTERVAL = 1e-5
DEFAULT_REPLY_TIMEOUT = 1e-3
COLLINEAR_TOLERANCE = 1e-12

SCENARIO_KEYS = (
    "geometry", "L", "K", "decoherenceChannel", "storageRates", "deviceBehavior",
    "timingTolerance", "errorRateThreshold", "challengeInterval", "replyTimeout",
    "seed", "description",
)

Point = Tuple[float, float]
ChannelKind = Literal["open", "secured"]
BehaviorKind = Literal["honest", "displaced", "cloner"]


def _point(value: Any, name: str) -> Point:
    if isinstance(value, (int, float)):
        return (float(value), 0.0)
    if isinstance(value, (list, tuple)) and 1 <= len(value) <= 2:
        try:
            coords = [float(item) for item in value]
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"{name} coordinates must be numbers", field=name, cause=exc)
        if len(coords) == 1:
            coords.append(0.0)
        return (coords[0], coords[1])
    raise ConfigurationError(f"{name} must be a number or [x, y]", field=name)


def _reject_unknown(payload: Mapping[str, Any], allowed: Tuple[str, ...], where: str) -> None:
    if not isinstance(payload, Mapping):
        raise ConfigurationError(f"{where} must be a JSON object", field=where)
    for key in payload:
        if key not in allowed:
            raise ConfigurationError(f"unknown {where} key '{key}'", field=key)


@dataclass(frozen=True)
class Geometry:
    """Station positions, the claimed device position and the signal speed."""

    stations: Mapping[str, Point]
    device: Point
    c: float = SPEED_OF_LIGHT
    dimension: int = 1

    def __post_init__(self) -> None:
        if self.c <= 0:
            raise ConfigurationError("signal speed must be positive", field="c")
        if ALICE not in self.stations:
            raise ConfigurationError("station 'A' is required", field="stations")
        if DEVICE in self.stations:
            raise ConfigurationError("'C' names the device, not a station", field="stations")
        if self.dimension == 1:
            if len(self.stations) != 2:
                raise ConfigurationError("1D geometries use exactly two stations", field="stations")
            partner = self.partners[0]
            direct = self.delay(self.stations[ALICE], self.stations[partner])
            via = self.tau(ALICE) + self.tau(partner)
            if abs(via - direct) > COLLINEAR_TOLERANCE * max(direct, 1e-300):
                raise ConfigurationError(
                    "claimed position must lie between the two stations", field="device"
                )
        elif self.dimension == 2:
            if len(self.stations) < 3:
                raise ConfigurationError(
                    "2D geometries need at least three stations", field="stations"
                )
        else:
            raise ConfigurationError(
                f"dimension must be 1 or 2, got {self.dimension}", field="dimension"
            )

    @property
    def partners(self) -> Tuple[str, ...]:
        """Reference stations other than Alice, in sorted order."""

        return tuple(sorted(name for name in self.stations if name != ALICE))

    def position(self, name: str) -> Point:
        if name == DEVICE:
            return self.device
        try:
            return self.stations[name]
        except KeyError:
            raise ConfigurationError(f"unknown station '{name}'", field="stations") from None

    def delay(self, source: Point, target: Point) -> float:
        return math.dist(source, target) / self.c

    def tau(self, name: str, point: Optional[Point] = None) -> float:
        """Light travel time between a station and ``point`` (the claimed position by default)."""

        return self.delay(self.position(name), self.device if point is None else point)

    def tau_between(self, first: str, second: str) -> float:
        return self.delay(self.position(first), self.position(second))

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> "Geometry":
        _reject_unknown(payload, ("stations", "device", "c", "dimension"), "geometry")
        stations = payload.get("stations")
        if not isinstance(stations, Mapping) or not stations:
            raise ConfigurationError(
                "geometry.stations must map ids to positions", field="stations"
            )
        return cls(
            stations={
                str(name): _point(value, f"stations.{name}")
                for name, value in stations.items()
            },
            device=_point(payload.get("device"), "device"),
            c=float(payload.get("c", SPEED_OF_LIGHT)),
            dimension=int(payload.get("dimension", 1)),
        )

    def to_dict(self) -> MutableMapping[str, object]:
        return {
            "stations": {name: list(point) for name, point in sorted(self.stations.items())},
            "device": list(self.device),
            "c": self.c,
            "dimension": self.dimension,
        }


@dataclass(frozen=True)
class DeviceBehavior:
    """How the prover answers: honestly, from a displaced position, or via a cloner."""

    kind: BehaviorKind = "honest"
    actual_position: Optional[Point] = None
    clone_fidelity: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("honest", "displaced", "cloner"):
            raise ConfigurationError(f"unknown device behaviour '{self.kind}'", field="kind")
        if self.kind == "displaced" and self.actual_position is None:
            raise ConfigurationError(
                "displaced devices need an actual position", field="actualPosition"
            )
        if not 0.0 <= self.clone_fidelity <= 1.0:
            raise ConfigurationError("FClone must lie in [0, 1]", field="FClone")

    def position(self, claimed: Point) -> Point:
        if self.kind == "displaced" and self.actual_position is not None:
            return self.actual_position
        return claimed

    @property
    def decode_factor(self) -> float:
        return self.clone_fidelity if self.kind == "cloner" else 1.0

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> "DeviceBehavior":
        if isinstance(payload, str):
            return cls(kind=payload)  # type: ignore[arg-type]
        _reject_unknown(payload, ("kind", "actualPosition", "FClone"), "deviceBehavior")
        actual = payload.get("actualPosition")
        return cls(
            kind=payload.get("kind", "honest"),
            actual_position=None if actual is None else _point(actual, "actualPosition"),
            clone_fidelity=float(payload.get("FClone", 1.0)),
        )

    def to_dict(self) -> MutableMapping[str, object]:
        data: MutableMapping[str, object] = {"kind": self.kind}
        if self.actual_position is not None:
            data["actualPosition"] = list(self.actual_position)
        if self.kind == "cloner":
            data["FClone"] = self.clone_fidelity
        return data


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to run one protocol scenario."""

    geometry: Geometry
    pairs: int
    challenge_bits: int
    decoherence_channel: ChannelSpec = field(
        default_factory=lambda: ChannelSpec(family="depolarization", p=0.0)
    )
    storage_rates: Mapping[str, float] = field(default_factory=dict)
    device_behavior: DeviceBehavior = field(default_factory=DeviceBehavior)
    timing_tolerance: float = DEFAULT_TIMING_TOLERANCE
    error_rate_threshold: Optional[float] = None
    challenge_interval: float = DEFAULT_CHALLENGE_INTERVAL
    reply_timeout: float = DEFAULT_REPLY_TIMEOUT
    seed: int = 0

    def __post_init__(self) -> None:
        partners = len(self.geometry.partners)
        if self.pairs < 2 or self.pairs % (2 * partners):
            raise ConfigurationError(
                f"L must be a positive multiple of {2 * partners}", field="L"
            )
        if self.challenge_bits <= 0 or self.challenge_bits % 2:
            raise ConfigurationError("K must be a positive even number", field="K")
        if self.challenge_bits >= self.pairs:
            raise ConfigurationError("K must be smaller than L", field="K")
        per_partner = math.ceil(self.challenge_bits // 2 / partners)
        if per_partner > self.pairs // (2 * partners):
            raise ConfigurationError(
                "not enough pairs per partner for the challenge", field="K"
            )
        if self.decoherence_channel.family not in DAMPING_FAMILIES:
            raise ConfigurationError(
                f"protocol decoherence must be one of {', '.join(DAMPING_FAMILIES)}",
                field="decoherenceChannel",
            )
        known = set(self.geometry.stations) | {DEVICE}
        for name, rate in self.storage_rates.items():
            if name not in known:
                raise ConfigurationError(
                    f"storage rate for unknown station '{name}'", field="storageRates"
                )
            if rate < 0:
                raise ConfigurationError("storage rates must be non-negative", field="storageRates")
        if self.timing_tolerance <= 0:
            raise ConfigurationError("timingTolerance must be positive", field="timingTolerance")
        if self.error_rate_threshold is not None and not 0.0 <= self.error_rate_threshold <= 1.0:
            raise ConfigurationError(
                "errorRateThreshold must lie in [0, 1]", field="errorRateThreshold"
            )
        if self.challenge_interval <= 0:
            raise ConfigurationError(
                "challengeInterval must be positive", field="challengeInterval"
            )
        if self.reply_timeout <= 0:
            raise ConfigurationError("replyTimeout must be positive", field="replyTimeout")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer", field="seed")

    @property
    def dibits(self) -> int:
        return self.challenge_bits // 2

    def storage_rate(self, name: str) -> float:
        return float(self.storage_rates.get(name, 0.0))

    def honest_fidelity(self) -> float:
        """Decode fidelity of a fresh pair under the baseline channel."""

        return scalar_fidelity(self.decoherence_channel.family, 2, self.decoherence_channel.p)

    def effective_error_threshold(self) -> float:
        """Explicit threshold, or the midpoint between honest and cloning error rates."""

        if self.error_rate_threshold is not None:
            return self.error_rate_threshold
        return ((1.0 - self.honest_fidelity()) + (1.0 - CLONING_BOUND)) / 2.0

    def with_seed(self, seed: Optional[int]) -> "ScenarioConfig":
        return self if seed is None else replace(self, seed=seed)

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> "ScenarioConfig":
        _reject_unknown(payload, SCENARIO_KEYS, "scenario")
        for required in ("geometry", "L", "K"):
            if required not in payload:
                raise ConfigurationError(f"scenario requires '{required}'", field=required)
        values: Dict[str, Any] = {
            "geometry": Geometry.from_payload(payload["geometry"]),
            "pairs": _integer(payload["L"], "L"),
            "challenge_bits": _integer(payload["K"], "K"),
        }
        if "decoherenceChannel" in payload:
            values["decoherence_channel"] = ChannelSpec.from_payload(payload["decoherenceChannel"])
        if "storageRates" in payload:
            rates = payload["storageRates"]
            if not isinstance(rates, Mapping):
                raise ConfigurationError(
                    "storageRates must map stations to rates", field="storageRates"
                )
            values["storage_rates"] = {str(k): _real(v, "storageRates") for k, v in rates.items()}
        if "deviceBehavior" in payload:
            values["device_behavior"] = DeviceBehavior.from_payload(payload["deviceBehavior"])
        for key, name in (
            ("timingTolerance", "timing_tolerance"),
            ("errorRateThreshold", "error_rate_threshold"),
            ("challengeInterval", "challenge_interval"),
            ("replyTimeout", "reply_timeout"),
        ):
            if payload.get(key) is not None:
                values[name] = _real(payload[key], key)
        if "seed" in payload:
            values["seed"] = _integer(payload["seed"], "seed")
        return cls(**values)

    def to_dict(self) -> MutableMapping[str, object]:
        return {
            "geometry": self.geometry.to_dict(),
            "L": self.pairs,
            "K": self.challenge_bits,
            "decoherenceChannel": self.decoherence_channel.to_dict(),
            "storageRates": dict(sorted(self.storage_rates.items())),
            "deviceBehavior": self.device_behavior.to_dict(),
            "timingTolerance": self.timing_tolerance,
            "errorRateThreshold": self.error_rate_threshold,
            "challengeInterval": self.challenge_interval,
            "replyTimeout": self.reply_timeout,
            "seed": self.seed,
        }


def _real(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{name} must be a number", field=name)
    return float(value)


def _integer(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"{name} must be an integer", field=name)
    return value


@dataclass(frozen=True)
class Endpoint:
    station: str
    slot: int


@dataclass
class PairRecord:
    """One shared entangled pair, tracked by logical Bell index and Pauli frame."""

    label: int
    endpoints: Tuple[Endpoint, Endpoint]
    pauli_frame: int = 0
    state: int = 0
    birth_time: float = 0.0
    consumed: bool = False
    released: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> MutableMapping[str, object]:
        return {
            "label": self.label,
            "endpoints": [[item.station, item.slot] for item in self.endpoints],
            "pauliFrame": self.pauli_frame,
            "state": self.state,
            "birthTime": self.birth_time,
            "consumed": self.consumed,
        }


@dataclass
class PairRegistry:
    """Named set of pairs; consumed pairs are never handed out again."""

    name: str
    pairs: List[PairRecord] = field(default_factory=list)

    def add(self, record: PairRecord) -> PairRecord:
        if any(existing.label == record.label for existing in self.pairs):
            raise ValidationError(f"label {record.label} already present in {self.name}")
        self.pairs.append(record)
        return record

    def get(self, label: int) -> PairRecord:
        for record in self.pairs:
            if record.label == label:
                return record
        raise ProtocolCorruptionError(f"{self.name} has no pair labelled {label}")

    def unconsumed(self) -> List[PairRecord]:
        return [record for record in self.pairs if not record.consumed]

    def consume(self, label: int) -> PairRecord:
        record = self.get(label)
        if record.consumed:
            raise ProtocolCorruptionError(f"{self.name} pair {label} was already consumed")
        record.consumed = True
        return record

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def consumed_count(self) -> int:
        return sum(1 for record in self.pairs if record.consumed)

    def to_dict(self) -> MutableMapping[str, object]:
        return {"name": self.name, "pairs": [record.to_dict() for record in self.pairs]}


@dataclass(frozen=True)
class ClassicalMessage:
    """A classical message travelling at the signal speed."""

    sender: str
    receiver: str
    payload: Mapping[str, Any]
    emit_time: float
    arrive_time: float
    channel: ChannelKind = "open"

    def __post_init__(self) -> None:
        if self.arrive_time < self.emit_time:
            raise ValidationError("messages cannot arrive before they are sent")
        if self.channel not in ("open", "secured"):
            raise ValidationError(f"unknown channel '{self.channel}'")
        if self.channel == "secured" and DEVICE in (self.sender, self.receiver):
            raise ValidationError("secured channels only join reference stations")

    def to_dict(self) -> MutableMapping[str, object]:
        return {
            "sender": self.sender,
            "receiver": self.receiver,
            "channel": self.channel,
            "emitTime": self.emit_time,
            "arriveTime": self.arrive_time,
            "payload": dict(self.payload),
        }


@dataclass(frozen=True)
class Verdict:
    """Outcome of the verification step."""

    accept: bool
    reasons: Tuple[str, ...]
    round_trip_times: Mapping[str, Tuple[float, ...]]
    expected_round_trip: Mapping[str, float]
    residuals: Mapping[str, Tuple[float, ...]]
    max_residual: float
    dibit_error_rate: float
    bit_error_rate: float
    error_rate_threshold: float
    timing_tolerance: float
    sent_dibits: Tuple[int, ...]
    decoded_dibits: Tuple[Optional[int], ...]
    instances: int
    successful_instances: int

    def to_dict(self) -> MutableMapping[str, object]:
        return {
            "accept": self.accept,
            "reasons": list(self.reasons),
            "roundTripTimes": {k: list(v) for k, v in sorted(self.round_trip_times.items())},
            "expectedRoundTrip": dict(sorted(self.expected_round_trip.items())),
            "residuals": {k: list(v) for k, v in sorted(self.residuals.items())},
            "maxResidual": self.max_residual,
            "dibitErrorRate": self.dibit_error_rate,
            "bitErrorRate": self.bit_error_rate,
            "errorRateThreshold": self.error_rate_threshold,
            "timingTolerance": self.timing_tolerance,
            "sentDibits": list(self.sent_dibits),
            "decodedDibits": list(self.decoded_dibits),
            "instances": self.instances,
            "successfulInstances": self.successful_instances,
        }
