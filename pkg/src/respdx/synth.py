"""Synthetic breath sessions and cohorts built on a Hall-effect sensor model.

Chest displacement (raised-cosine breath cycles) is converted to magnetic
field through a linear magnet coupling, then to Hall voltage, then recorded
in millivolts with baseline wander and white noise added.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .errors import InvalidSpecError
from .session import BreathSession, Phase, TestKind
from .signal import TimeSeries

ELEMENTARY_CHARGE = 1.602176634e-19  # C
INHALE_FRACTION = 1.0 / 2.4  # inhale:exhale = 1:1.4
OUTPUT_SCALE = 1e3  # volts -> recorded units (mV)


@dataclass(frozen=True)
class SensorModel:
    current_a: float = 1e-3
    plate_length_m: float = 1e-3
    carrier_density_per_m3: float = 1e20
    cross_section_m2: float = 1e-8
    magnet_coupling: float = 1e-3  # tesla per unit chest displacement

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not (math.isfinite(v) and v > 0):
                raise InvalidSpecError(f"sensor {name} must be positive, got {v}")


def hall_voltage(model: SensorModel, field_t):
    """V = I B l / (n e A)."""
    if model.carrier_density_per_m3 <= 0 or model.cross_section_m2 <= 0:
        raise InvalidSpecError("carrier density and cross-section must be positive")
    k = model.current_a * model.plate_length_m / (
        model.carrier_density_per_m3 * ELEMENTARY_CHARGE * model.cross_section_m2)
    return k * np.asarray(field_t, dtype=float) if np.ndim(field_t) else k * float(field_t)


@dataclass(frozen=True)
class BreathProfile:
    respiration_rate_bpm: float = 14.0
    amplitude: float = 1.0  # chest displacement units
    amplitude_jitter: float = 0.05
    rate_jitter: float = 0.04
    baseline_wander_amp: float = 0.5  # recorded units
    noise_std: float = 0.05  # recorded units
    entropy_knob: float = 0.1
    hold_duration_s: float = 45.0
    deep_duration_s: float = 30.0

    def __post_init__(self):
        if not 4 < self.respiration_rate_bpm < 60:
            raise InvalidSpecError(f"respiration rate {self.respiration_rate_bpm} outside (4, 60) bpm")
        if self.amplitude <= 0:
            raise InvalidSpecError("amplitude must be > 0")
        for name in ("amplitude_jitter", "rate_jitter", "baseline_wander_amp", "noise_std"):
            if getattr(self, name) < 0:
                raise InvalidSpecError(f"{name} must be >= 0")
        if not 0 <= self.entropy_knob <= 1:
            raise InvalidSpecError("entropy_knob must lie in [0, 1]")


HEALTHY = BreathProfile()
COVID_LIKE = BreathProfile(respiration_rate_bpm=20.0, amplitude=0.6, amplitude_jitter=0.2,
                           rate_jitter=0.12, entropy_knob=0.6, hold_duration_s=25.0,
                           deep_duration_s=20.0)


@dataclass(frozen=True)
class Protocol:
    kind: TestKind
    phase_plan: tuple[tuple[str, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", TestKind(self.kind))
        object.__setattr__(self, "phase_plan", tuple((str(a), float(b)) for a, b in self.phase_plan))
        if not self.phase_plan or any(d <= 0 for _, d in self.phase_plan):
            raise InvalidSpecError("phase durations must be > 0")
        labels = [p for p, _ in self.phase_plan]
        if self.kind is TestKind.HOLD and labels.count("hold") != 1:
            raise InvalidSpecError("a hold protocol needs exactly one hold phase")
        if self.kind is TestKind.DEEP and labels.count("deep") != 1:
            raise InvalidSpecError("a deep protocol needs exactly one deep phase")

    @classmethod
    def normal(cls, duration_s: float = 180.0) -> "Protocol":
        return cls(TestKind.NORMAL, (("normal", duration_s),))

    @classmethod
    def hold(cls, hold_s: float = 45.0, total_s: float = 180.0) -> "Protocol":
        hold_s = min(hold_s, 180.0, total_s - 1.0)
        return cls(TestKind.HOLD, (("hold", hold_s), ("recovery", total_s - hold_s)))

    @classmethod
    def deep(cls, deep_s: float = 30.0, total_s: float = 180.0) -> "Protocol":
        return cls(TestKind.DEEP, (("deep", deep_s), ("normal", total_s - deep_s)))

    @classmethod
    def for_kind(cls, kind: TestKind | str, profile: BreathProfile) -> "Protocol":
        kind = TestKind(kind)
        if kind is TestKind.HOLD:
            return cls.hold(profile.hold_duration_s)
        if kind is TestKind.DEEP:
            return cls.deep(profile.deep_duration_s)
        return cls.normal()


def round_half_up(x: float) -> int:
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def phase_bounds(protocol: Protocol, sample_rate: float) -> list[Phase]:
    out, t = [], 0.0
    start = 0
    for label, dur in protocol.phase_plan:
        t += dur
        stop = round_half_up(t * sample_rate)
        out.append(Phase(label, start, stop))
        start = stop
    return out


def _breath_cycles(n: int, fs: float, rate_bpm: float, amp: float, profile: BreathProfile,
                   rng: np.random.Generator) -> np.ndarray:
    """Concatenated asymmetric raised-cosine cycles, each rising 0 -> A -> 0."""
    out = np.zeros(n)
    pos = 0.0
    e = profile.entropy_knob
    while pos < n:
        period = 60.0 / rate_bpm * max(0.4, 1.0 + profile.rate_jitter * rng.standard_normal())
        a = amp * max(0.1, 1.0 + profile.amplitude_jitter * rng.standard_normal())
        frac = INHALE_FRACTION * (1.0 + 0.3 * e * rng.uniform(-1, 1))
        length = period * fs
        i0 = int(math.ceil(pos))
        i1 = min(n, int(math.ceil(pos + length)))
        u = (np.arange(i0, i1) - pos) / length  # cycle phase in [0, 1)
        w = np.where(u < frac, 0.5 * (1 - np.cos(np.pi * u / frac)),
                     0.5 * (1 + np.cos(np.pi * (u - frac) / (1 - frac))))
        if e > 0:
            ph = rng.uniform(0, 2 * np.pi, size=2)
            w = w + e * np.sin(np.pi * u) * (0.25 * np.sin(4 * np.pi * u + ph[0])
                                             + 0.15 * np.sin(6 * np.pi * u + ph[1]))
        out[i0:i1] = a * w
        pos += length
    return out


def displacement(protocol: Protocol, profile: BreathProfile, sample_rate: float,
                 rng: np.random.Generator) -> tuple[np.ndarray, list[Phase]]:
    phases = phase_bounds(protocol, sample_rate)
    x = np.zeros(phases[-1].stop)
    for ph in phases:
        n = ph.stop - ph.start
        t = np.arange(n) / sample_rate
        if ph.label == "hold":
            # residual cardiac motion, plus irregular leakage scaled by the entropy knob
            seg = 0.02 * profile.amplitude * np.sin(2 * np.pi * 1.0 * t + rng.uniform(0, 2 * np.pi))
            if profile.entropy_knob > 0:
                leak = np.cumsum(rng.standard_normal(n)) / math.sqrt(n)
                seg = seg + 0.1 * profile.entropy_knob * profile.amplitude * leak
        elif ph.label == "deep":
            seg = _breath_cycles(n, sample_rate, profile.respiration_rate_bpm * 0.5,
                                 profile.amplitude * 2.5, profile, rng)
        elif ph.label == "recovery":
            seg = _breath_cycles(n, sample_rate, profile.respiration_rate_bpm * 1.15,
                                 profile.amplitude, profile, rng)
            seg *= 1.0 + 0.6 * np.exp(-t / 15.0)
        else:
            seg = _breath_cycles(n, sample_rate, profile.respiration_rate_bpm,
                                 profile.amplitude, profile, rng)
        x[ph.start:ph.stop] = seg
    return x, phases


def generate_session(profile: BreathProfile, protocol: Protocol, sensor: SensorModel | None = None,
                     sample_rate: float = 10.0, seed: int = 0, session_id: str = "s0",
                     participant_id: str = "p0") -> BreathSession:
    sensor = sensor or SensorModel()
    rng = np.random.default_rng(seed)
    disp, phases = displacement(protocol, profile, sample_rate, rng)
    volts = hall_voltage(sensor, sensor.magnet_coupling * disp)
    x = OUTPUT_SCALE * volts
    n = x.size
    t = np.arange(n) / sample_rate
    if profile.baseline_wander_amp > 0:
        f = rng.uniform(0.01, 0.04)
        x = x + profile.baseline_wander_amp * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    if profile.noise_std > 0:
        x = x + profile.noise_std * rng.standard_normal(n)
    return BreathSession(session_id, participant_id, protocol.kind,
                         TimeSeries(x, sample_rate), phases)


@dataclass(frozen=True)
class GroupCovariates:
    age_mean: float
    age_sd: float
    male_prob: float
    bmi_mean: float
    bmi_sd: float


# group summaries of the reference cohort (patients / healthy)
TREATED_COVARIATES = GroupCovariates(46.88, 13.64, 14 / 33, 22.93, 2.99)
CONTROL_COVARIATES = GroupCovariates(40.91, 16.88, 13 / 37, 22.03, 3.32)


@dataclass(frozen=True)
class CohortSpec:
    n_treated: int = 33
    n_control: int = 37
    treated_profile: BreathProfile = COVID_LIKE
    control_profile: BreathProfile = HEALTHY
    treated_covariates: GroupCovariates = TREATED_COVARIATES
    control_covariates: GroupCovariates = CONTROL_COVARIATES
    seed: int = 0
    sample_rate: float = 10.0
    sensor: SensorModel = field(default_factory=SensorModel)
    between_subject_sd: float = 0.08  # log-normal spread of rate and amplitude

    def __post_init__(self):
        if self.n_treated < 1 or self.n_control < 1:
            raise InvalidSpecError("each group needs at least one participant")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "CohortSpec":
        d = dict(d)
        for k in ("treated_profile", "control_profile"):
            if k in d:
                d[k] = BreathProfile(**d[k])
        for k in ("treated_covariates", "control_covariates"):
            if k in d:
                d[k] = GroupCovariates(**d[k])
        if "sensor" in d:
            d["sensor"] = SensorModel(**d["sensor"])
        return cls(**d)


@dataclass(frozen=True)
class Participant:
    id: str
    group: str  # "covid" | "healthy"
    age: float
    gender: int  # 1 = male
    bmi: float

    @property
    def label(self) -> int:
        return 1 if self.group == "covid" else 0


@dataclass
class Dataset:
    participants: list[Participant]
    sessions: dict[tuple[str, TestKind], BreathSession]
    seeds: dict[str, int] = field(default_factory=dict)
    spec: dict = field(default_factory=dict)

    def sessions_for(self, kind: TestKind | str) -> list[BreathSession]:
        kind = TestKind(kind)
        return [self.sessions[(p.id, kind)] for p in self.participants if (p.id, kind) in self.sessions]

    def participant(self, pid: str) -> Participant:
        for p in self.participants:
            if p.id == pid:
                return p
        raise KeyError(pid)


def sample_covariates(cov: GroupCovariates, rng: np.random.Generator) -> tuple[float, int, float]:
    age = float(np.clip(rng.normal(cov.age_mean, cov.age_sd), 18, 90))
    gender = int(rng.random() < cov.male_prob)
    bmi = float(np.clip(rng.normal(cov.bmi_mean, cov.bmi_sd), 14, 45))
    return age, gender, bmi


def participant_profile(base: BreathProfile, sd: float, rng: np.random.Generator) -> BreathProfile:
    rate = float(np.clip(base.respiration_rate_bpm * math.exp(sd * rng.standard_normal()), 5, 55))
    amp = base.amplitude * math.exp(1.5 * sd * rng.standard_normal())
    hold = float(np.clip(base.hold_duration_s * math.exp(2 * sd * rng.standard_normal()), 10, 120))
    return replace(base, respiration_rate_bpm=rate, amplitude=amp, hold_duration_s=hold)


def cohort_participants(spec: CohortSpec) -> list[tuple[Participant, BreathProfile]]:
    """Covariates and individual breathing profile for every participant, treated first."""
    out = []
    groups = [("covid", spec.n_treated, spec.treated_profile, spec.treated_covariates),
              ("healthy", spec.n_control, spec.control_profile, spec.control_covariates)]
    k = 0
    for group, count, profile, cov in groups:
        for i in range(count):
            pid = f"{'P' if group == 'covid' else 'H'}{i + 1:03d}"
            rng = np.random.default_rng(np.random.SeedSequence([spec.seed, k]))
            age, gender, bmi = sample_covariates(cov, rng)
            out.append((Participant(pid, group, age, gender, bmi),
                        participant_profile(profile, spec.between_subject_sd, rng)))
            k += 1
    return out


def generate_cohort(spec: CohortSpec) -> Dataset:
    participants, sessions, seeds = [], {}, {}
    for k, (p, prof) in enumerate(cohort_participants(spec)):
        participants.append(p)
        for j, kind in enumerate(TestKind):
            s = int(np.random.SeedSequence([spec.seed, k, j + 1]).generate_state(1)[0])
            sid = f"{p.id}_{kind.value}"
            seeds[sid] = s
            sessions[(p.id, kind)] = generate_session(prof, Protocol.for_kind(kind, prof), spec.sensor,
                                                      spec.sample_rate, s, sid, p.id)
    return Dataset(participants, sessions, seeds, spec.to_json())
