"""Event-driven simulation of entanglement-swapping location verification."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import lru_cache
from typing import Any, Callable, Dict, List, Mapping, MutableMapping, Optional, Set, Tuple

import numpy as np

from ..errors import ProtocolCorruptionError, ProtocolOrderError, ResourceError
from ..quantum.channels import scalar_fidelity
from ..quantum.random_noise import RngStream
from ..quantum.states import bell_state, decode_bell, encode_dibit
from . import _transport
from .frames import bit_errors, compose, corrected_dibit
from .types import (
    ALICE,
    DEVICE,
    Endpoint,
    PairRecord,
    PairRegistry,
    Point,
    ScenarioConfig,
    Verdict,
)

logger = logging.getLogger(__name__)

TransportFactory = Callable[..., _transport.EventTransport]

STREAM_SWAP = 1
STREAM_CHALLENGE = 2
STREAM_TELEPORT = 3
STREAM_DECODE = 4

OMEGA = "Omega_AC"


class Step(IntEnum):
    NEW = 0
    SETUP = 1
    SWAPPED = 2
    INFORMED = 3
    CHALLENGED = 4
    TELEPORTED = 5
    DECODED = 6
    VERIFIED = 7


def lambda_name(partner: str) -> str:
    return f"Lambda_A{partner}"


def lambda_prime_name(partner: str) -> str:
    return f"LambdaPrime_A{partner}"


def gamma_name(partner: str) -> str:
    return f"Gamma_{partner}C"


@lru_cache(maxsize=4)
def _encoded_index(dibit: int) -> int:
    return decode_bell(encode_dibit(bell_state(0), dibit))


@lru_cache(maxsize=4096)
def _pair_fidelity(family: str, p: float) -> float:
    return scalar_fidelity(family, 2, p)


@dataclass
class ChallengeRecord:
    """Bookkeeping for one challenge dibit from encoding to reply."""

    index: int
    dibit: int
    partner: str
    encoder: str
    prime_label: int
    omega_label: Optional[int] = None
    gamma_label: Optional[int] = None
    device_labels: Tuple[int, int] = (-1, -1)
    target_time: float = 0.0
    emit_times: Dict[str, float] = field(default_factory=dict)
    announced: Dict[str, int] = field(default_factory=dict)
    physical_index: int = 0
    arrivals: Dict[str, float] = field(default_factory=dict)
    decode_time: Optional[float] = None
    decoded: Optional[int] = None
    decode_fidelity: Optional[float] = None
    replies: Dict[str, float] = field(default_factory=dict)


class ProtocolWorld:
    """Stations, pair registries and the classical network for one scenario.

    Steps must run in order: :meth:`setup`, :meth:`entanglement_swap`,
    :meth:`inform_partner`, :meth:`generate_challenge`, :meth:`teleport_challenge`,
    :meth:`decode_at_device`, :meth:`verify`.
    """

    def __init__(
        self,
        config: ScenarioConfig,
        *,
        transport_factory: Optional[TransportFactory] = None,
    ) -> None:
        self.config = config
        self._transport_factory = transport_factory or _transport.EventTransport
        self._transport: Optional[_transport.EventTransport] = None
        self._step = Step.NEW
        self._registries: Dict[str, PairRegistry] = {}
        self._slots: Dict[str, int] = {}
        self._mapping: Dict[str, Dict[int, int]] = {}
        self._knowledge: Dict[str, Dict[str, Any]] = {}
        self._device_qubits: Set[int] = set()
        self._device_inbox: List[Mapping[str, Any]] = []
        self._challenges: List[ChallengeRecord] = []
        self._challenge_start = 0.0
        self._decode_rng: Optional[np.random.Generator] = None

    @classmethod
    def setup(
        cls,
        config: ScenarioConfig,
        *,
        transport_factory: Optional[TransportFactory] = None,
    ) -> "ProtocolWorld":
        """Create the world with every pair in ``(|00> + |11>)/sqrt2`` at time zero."""

        world = cls(config, transport_factory=transport_factory)
        world._setup()
        return world

    @property
    def step(self) -> Step:
        return self._step

    @property
    def partners(self) -> Tuple[str, ...]:
        return self.config.geometry.partners

    @property
    def registries(self) -> Mapping[str, PairRegistry]:
        return self._registries

    @property
    def challenges(self) -> Tuple[ChallengeRecord, ...]:
        return tuple(self._challenges)

    @property
    def transport(self) -> _transport.EventTransport:
        return self._require_transport()

    @property
    def trace(self) -> List[_transport.TraceEvent]:
        return list(self._require_transport().trace)

    @property
    def device_position(self) -> Point:
        return self.config.device_behavior.position(self.config.geometry.device)

    def registry(self, name: str) -> PairRegistry:
        try:
            return self._registries[name]
        except KeyError:
            raise ProtocolCorruptionError(f"no registry named '{name}'") from None

    def stream(self, stream_id: int) -> np.random.Generator:
        return RngStream(self.config.seed, stream_id).generator()

    def _require_transport(self) -> _transport.EventTransport:
        if self._transport is None:
            raise ProtocolOrderError("world is not set up. Call ProtocolWorld.setup() first.")
        return self._transport

    def _require_step(self, expected: Step, action: str) -> _transport.EventTransport:
        transport = self._require_transport()
        if self._step != expected:
            raise ProtocolOrderError(
                f"{action} requires step {expected.name}, world is at {self._step.name}"
            )
        return transport

    def _next_slot(self, station: str) -> int:
        slot = self._slots.get(station, 0)
        self._slots[station] = slot + 1
        return slot

    def _new_registry(self, name: str, first: str, second: str, count: int) -> PairRegistry:
        registry = PairRegistry(name=name)
        for label in range(count):
            registry.add(
                PairRecord(
                    label=label,
                    endpoints=(
                        Endpoint(first, self._next_slot(first)),
                        Endpoint(second, self._next_slot(second)),
                    ),
                )
            )
        self._registries[name] = registry
        return registry

    def _setup(self) -> None:
        if self._step != Step.NEW:
            raise ProtocolOrderError("world is already set up")
        config = self.config
        self._transport = self._transport_factory(config.geometry)
        self._new_registry(OMEGA, ALICE, DEVICE, config.pairs)
        per_partner = config.pairs // (2 * len(self.partners))
        for partner in self.partners:
            self._new_registry(lambda_name(partner), ALICE, partner, per_partner)
            self._new_registry(lambda_prime_name(partner), ALICE, partner, per_partner)
            self._registries[gamma_name(partner)] = PairRegistry(name=gamma_name(partner))
            self._mapping[partner] = {}
        self._device_qubits = set(range(config.pairs))
        self._transport.schedule(
            0.0,
            "setup",
            ALICE,
            {name: len(registry) for name, registry in self._registries.items()},
        )
        self._transport.run()
        self._step = Step.SETUP
        logger.info(
            "set up world with L=%d, K=%d, partners=%s", config.pairs, config.challenge_bits,
            ",".join(self.partners),
        )

    def entanglement_swap(self, rng: Optional[np.random.Generator] = None) -> "ProtocolWorld":
        """Swap every Lambda pair with a random Omega pair, creating the Gamma pairs."""

        transport = self._require_step(Step.SETUP, "entanglement_swap")
        generator = rng or self.stream(STREAM_SWAP)
        omega = self._registries[OMEGA]
        now = transport.now
        for partner in self.partners:
            gamma = self._registries[gamma_name(partner)]
            for link in self._registries[lambda_name(partner)].pairs:
                candidates = omega.unconsumed()
                if not candidates:
                    raise ResourceError("no unconsumed Omega pairs left to swap")
                chosen = candidates[int(generator.integers(len(candidates)))]
                outcome = int(generator.integers(4))
                omega.consume(chosen.label).released[ALICE] = now
                self._registries[lambda_name(partner)].consume(link.label).released[ALICE] = now
                gamma.add(
                    PairRecord(
                        label=link.label,
                        endpoints=(link.endpoints[1], chosen.endpoints[1]),
                        pauli_frame=compose(outcome, chosen.pauli_frame, link.pauli_frame),
                        birth_time=now,
                    )
                )
                self._mapping[partner][link.label] = chosen.label
                transport.schedule(
                    now,
                    "swap",
                    ALICE,
                    {"partner": partner, "j": link.label, "i": chosen.label, "outcome": outcome},
                )
        transport.run()
        self._step = Step.SWAPPED
        return self

    def inform_partner(self) -> "ProtocolWorld":
        """Send each partner its Gamma frames and the j -> i mapping over the secured channel."""

        transport = self._require_step(Step.SWAPPED, "inform_partner")
        for partner in self.partners:
            gamma = self._registries[gamma_name(partner)]
            entries = [
                [record.label, self._mapping[partner][record.label], record.pauli_frame]
                for record in gamma.pairs
            ]
            transport.send(
                ALICE,
                partner,
                {"kind": "swap-report", "entries": entries},
                emit_time=transport.now,
                channel="secured",
                on_delivery=self._on_swap_report,
            )
        transport.run()
        self._step = Step.INFORMED
        return self

    def _on_swap_report(self, event: _transport.TraceEvent) -> None:
        knowledge = self._knowledge.setdefault(event.actor, {})
        knowledge["mapping"] = {int(j): int(i) for j, i, _ in event.payload["entries"]}
        knowledge["frames"] = {int(j): int(frame) for j, _, frame in event.payload["entries"]}

    def generate_challenge(self, rng: Optional[np.random.Generator] = None) -> "ProtocolWorld":
        """Draw the K challenge bits and encode each dibit into a LambdaPrime pair."""

        transport = self._require_step(Step.INFORMED, "generate_challenge")
        generator = rng or self.stream(STREAM_CHALLENGE)
        config = self.config
        bits = [int(bit) for bit in generator.integers(0, 2, size=config.challenge_bits)]
        dibits = [(bits[2 * n] << 1) | bits[2 * n + 1] for n in range(config.dibits)]

        available = {p: self._registries[lambda_prime_name(p)].unconsumed() for p in self.partners}
        needed: Dict[str, int] = {}
        for n in range(config.dibits):
            partner = self.partners[n % len(self.partners)]
            needed[partner] = needed.get(partner, 0) + 1
        for partner, count in needed.items():
            if count > len(available[partner]):
                raise ResourceError(
                    f"{lambda_prime_name(partner)} has {len(available[partner])} pairs, "
                    f"challenge needs {count}"
                )

        cursor = {partner: 0 for partner in self.partners}
        for n, dibit in enumerate(dibits):
            partner = self.partners[n % len(self.partners)]
            record = available[partner][cursor[partner]]
            cursor[partner] += 1
            encoder = ALICE if int(generator.integers(2)) == 0 else partner
            self._challenges.append(
                ChallengeRecord(
                    index=n, dibit=dibit, partner=partner, encoder=encoder, prime_label=record.label
                )
            )

        now = transport.now
        for challenge in self._challenges:
            if challenge.encoder == ALICE:
                self._encode(challenge, now)
        for partner in self.partners:
            assignments = [
                [c.index, c.prime_label, c.encoder]
                for c in self._challenges
                if c.partner == partner
            ]
            transport.send(
                ALICE,
                partner,
                {"kind": "challenge", "bits": bits, "assignments": assignments},
                emit_time=now,
                channel="secured",
                on_delivery=self._on_challenge,
            )
        transport.run()
        self._challenge_start = transport.now
        self._step = Step.CHALLENGED
        return self

    def _on_challenge(self, event: _transport.TraceEvent) -> None:
        knowledge = self._knowledge.setdefault(event.actor, {})
        knowledge["challenge"] = list(event.payload["bits"])
        for index, _, encoder in event.payload["assignments"]:
            if encoder == event.actor:
                self._encode(self._challenges[int(index)], event.time_s)

    def _encode(self, challenge: ChallengeRecord, time: float) -> None:
        registry = self._registries[lambda_prime_name(challenge.partner)]
        record = registry.get(challenge.prime_label)
        record.state = _encoded_index(challenge.dibit)
        self._require_transport().schedule(
            time,
            "encode",
            challenge.encoder,
            {"challenge": challenge.index, "pair": challenge.prime_label},
        )

    def teleport_challenge(self, rng: Optional[np.random.Generator] = None) -> "ProtocolWorld":
        """Schedule both teleportations of every challenge pair towards the device.

        Emissions are staggered so Alice's and the partner's messages reach the claimed
        position at the same instant ``T_n``.
        """

        transport = self._require_step(Step.CHALLENGED, "teleport_challenge")
        generator = rng or self.stream(STREAM_TELEPORT)
        geometry = self.config.geometry
        omega = self._registries[OMEGA]
        lead = max(geometry.tau(name) for name in geometry.stations)
        start = self._challenge_start + lead
        true_position = self.device_position

        for challenge in self._challenges:
            partner = challenge.partner
            knowledge = self._knowledge.get(partner, {})
            if "mapping" not in knowledge:
                raise ProtocolOrderError(f"station {partner} has not received the swap report")
            gamma = self._registries[gamma_name(partner)]
            prime = self._registries[lambda_prime_name(partner)]
            candidates = omega.unconsumed()
            links = gamma.unconsumed()
            if not candidates or not links:
                raise ResourceError(f"no pairs left to teleport challenge {challenge.index}")

            target = start + challenge.index * self.config.challenge_interval
            emit_alice = target - geometry.tau(ALICE)
            emit_partner = target - geometry.tau(partner)

            chosen = candidates[int(generator.integers(len(candidates)))]
            link = links[0]
            outcome_alice = int(generator.integers(4))
            outcome_partner = int(generator.integers(4))
            omega.consume(chosen.label).released[ALICE] = emit_alice
            gamma.consume(link.label).released[partner] = emit_partner
            encoded = prime.consume(challenge.prime_label)
            encoded.released[ALICE] = emit_alice
            encoded.released[partner] = emit_partner

            challenge.omega_label = chosen.label
            challenge.gamma_label = link.label
            challenge.device_labels = (chosen.label, knowledge["mapping"][link.label])
            challenge.target_time = target
            challenge.emit_times = {ALICE: emit_alice, partner: emit_partner}
            challenge.announced = {
                ALICE: compose(outcome_alice, chosen.pauli_frame),
                partner: compose(outcome_partner, knowledge["frames"][link.label]),
            }
            challenge.physical_index = compose(
                encoded.state, chosen.pauli_frame, outcome_alice, link.pauli_frame, outcome_partner
            )
            for sender, label in ((ALICE, chosen.label), (partner, challenge.device_labels[1])):
                transport.send(
                    sender,
                    DEVICE,
                    {
                        "kind": "teleport",
                        "challenge": challenge.index,
                        "label": label,
                        "outcome": challenge.announced[sender],
                    },
                    emit_time=challenge.emit_times[sender],
                    destination=true_position,
                    on_delivery=self._on_device_delivery,
                )
        self._step = Step.TELEPORTED
        return self

    def decode_at_device(self, rng: Optional[np.random.Generator] = None) -> "ProtocolWorld":
        """Deliver the teleport messages, decode at the device and send its replies."""

        transport = self._require_step(Step.TELEPORTED, "decode_at_device")
        self._decode_rng = rng or self.stream(STREAM_DECODE)
        transport.run()
        self._step = Step.DECODED
        return self

    def _on_device_delivery(self, event: _transport.TraceEvent) -> None:
        payload = event.payload
        self._device_inbox.append(dict(payload))
        index = int(payload["challenge"])
        if not 0 <= index < len(self._challenges):
            raise ProtocolCorruptionError(f"message references unknown challenge {index}")
        label = int(payload["label"])
        if label not in self._device_qubits:
            raise ProtocolCorruptionError(f"device holds no unconsumed qubit labelled {label}")
        challenge = self._challenges[index]
        challenge.arrivals[str(payload["from"])] = event.time_s
        if len(challenge.arrivals) == 2:
            self._decode(challenge, event.time_s)

    def _decode(self, challenge: ChallengeRecord, time: float) -> None:
        transport = self._require_transport()
        generator = self._decode_rng
        if generator is None:
            raise ProtocolOrderError("decode_at_device has not been called")
        for label in challenge.device_labels:
            if label not in self._device_qubits:
                raise ProtocolCorruptionError(f"device qubit {label} was already consumed")
            self._device_qubits.remove(label)
        self._registries[OMEGA].get(challenge.device_labels[0]).released[DEVICE] = time
        if challenge.gamma_label is not None:
            gamma = self._registries[gamma_name(challenge.partner)]
            gamma.get(challenge.gamma_label).released[DEVICE] = time

        fidelity = self.decode_fidelity(challenge)
        success = fidelity * self.config.device_behavior.decode_factor
        measured = challenge.physical_index
        if generator.random() >= success:
            measured ^= 1 + int(generator.integers(3))
        decoded = corrected_dibit(measured, *challenge.announced.values())
        challenge.decode_time = time
        challenge.decoded = decoded
        challenge.decode_fidelity = fidelity
        transport.schedule(
            time, "decode", DEVICE, {"challenge": challenge.index, "dibit": decoded}
        )
        for station in (ALICE, challenge.partner):
            transport.send(
                DEVICE,
                station,
                {"kind": "reply", "challenge": challenge.index, "dibit": decoded},
                emit_time=time,
                origin=self.device_position,
                on_delivery=self._on_reply,
            )

    def _on_reply(self, event: _transport.TraceEvent) -> None:
        challenge = self._challenges[int(event.payload["challenge"])]
        challenge.replies[event.actor] = event.time_s

    def decode_fidelity(self, challenge: ChallengeRecord) -> float:
        """Bell-pair fidelity after baseline noise plus storage decoherence of every endpoint."""

        spec = self.config.decoherence_channel
        if spec.p >= 1.0:
            return _pair_fidelity(spec.family, 1.0)
        exponent = -math.log1p(-spec.p)
        partner = challenge.partner
        records = [self._registries[OMEGA].get(challenge.device_labels[0])]
        if challenge.gamma_label is not None:
            records.append(self._registries[gamma_name(partner)].get(challenge.gamma_label))
        records.append(self._registries[lambda_prime_name(partner)].get(challenge.prime_label))
        for record in records:
            for endpoint in record.endpoints:
                released = record.released.get(endpoint.station)
                if released is None:
                    continue
                age = max(released - record.birth_time, 0.0)
                exponent += self.config.storage_rate(endpoint.station) * age
        return _pair_fidelity(spec.family, -math.expm1(-exponent))

    def verify(self) -> Verdict:
        """Compare round-trip times with the claimed position and check the decoded dibits."""

        transport = self._require_step(Step.DECODED, "verify")
        config = self.config
        geometry = config.geometry
        stations = (ALICE,) + self.partners
        expected = {name: 2.0 * geometry.tau(name) for name in stations}
        round_trips: Dict[str, List[float]] = {name: [] for name in stations}
        residuals: Dict[str, List[float]] = {name: [] for name in stations}
        timeouts = 0

        for challenge in self._challenges:
            for station, emitted in challenge.emit_times.items():
                arrival = challenge.replies.get(station)
                if arrival is None or arrival - emitted - expected[station] > config.reply_timeout:
                    timeouts += 1
                    continue
                round_trip = arrival - emitted
                round_trips[station].append(round_trip)
                residuals[station].append(round_trip - expected[station])

        decoded = tuple(challenge.decoded for challenge in self._challenges)
        sent = tuple(challenge.dibit for challenge in self._challenges)
        answered = [(s, d) for s, d in zip(sent, decoded) if d is not None]
        wrong = sum(1 for s, d in answered if s != d)
        flipped = sum(bit_errors(s, d) for s, d in answered)
        dibit_error_rate = wrong / len(answered) if answered else 1.0
        bit_error_rate = flipped / (2 * len(answered)) if answered else 1.0

        all_residuals = [abs(value) for values in residuals.values() for value in values]
        max_residual = max(all_residuals, default=0.0)
        threshold = config.effective_error_threshold()
        reasons: List[str] = []
        if max_residual > config.timing_tolerance:
            reasons.append("timing")
        if dibit_error_rate > threshold:
            reasons.append("error-rate")
        if timeouts:
            reasons.append("timeout")

        group = len(self.partners)
        instances = len(self._challenges) // group
        successful = sum(
            1
            for start in range(0, instances * group, group)
            if all(
                c.decoded == c.dibit for c in self._challenges[start : start + group]
            )
        )
        verdict = Verdict(
            accept=not reasons,
            reasons=tuple(reasons),
            round_trip_times={k: tuple(v) for k, v in round_trips.items()},
            expected_round_trip=expected,
            residuals={k: tuple(v) for k, v in residuals.items()},
            max_residual=max_residual,
            dibit_error_rate=dibit_error_rate,
            bit_error_rate=bit_error_rate,
            error_rate_threshold=threshold,
            timing_tolerance=config.timing_tolerance,
            sent_dibits=sent,
            decoded_dibits=decoded,
            instances=instances,
            successful_instances=successful,
        )
        transport.schedule(
            transport.now,
            "verdict",
            ALICE,
            {"accept": verdict.accept, "reasons": list(verdict.reasons)},
        )
        transport.run()
        self._step = Step.VERIFIED
        logger.info(
            "verdict: accept=%s reasons=%s max residual %.3e s, dibit error rate %.4f",
            verdict.accept, ",".join(verdict.reasons) or "-", max_residual, dibit_error_rate,
        )
        return verdict

    def view(self, actor: str) -> MutableMapping[str, Any]:
        """What ``actor`` knows: a station, the device ``C`` or ``eavesdropper``."""

        transport = self._require_transport()
        if actor == DEVICE:
            return {
                "qubits": sorted(self._device_qubits),
                "received": [dict(item) for item in self._device_inbox],
            }
        if actor == "eavesdropper":
            return {"messages": [m.to_dict() for m in transport.open_channel_view()]}
        if actor == ALICE:
            return {
                "mapping": {p: dict(m) for p, m in self._mapping.items()},
                "challenge": [c.dibit for c in self._challenges],
            }
        if actor in self.partners:
            return {key: value for key, value in self._knowledge.get(actor, {}).items()}
        raise ProtocolCorruptionError(f"unknown actor '{actor}'")

    def digest(self) -> str:
        """SHA-256 over the canonical JSON of the configuration and every registry."""

        document = {
            "config": self.config.to_dict(),
            "registries": [self._registries[name].to_dict() for name in sorted(self._registries)],
        }
        canonical = json.dumps(document, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def run_all(self) -> Verdict:
        """Execute every remaining step in order and return the verdict."""

        steps = (
            (Step.SETUP, self.entanglement_swap),
            (Step.SWAPPED, self.inform_partner),
            (Step.INFORMED, self.generate_challenge),
            (Step.CHALLENGED, self.teleport_challenge),
            (Step.TELEPORTED, self.decode_at_device),
        )
        for expected, action in steps:
            if self._step == expected:
                action()
        return self.verify()
