"""Contextual decision engine.

Turns a context snapshot into per-factor scores, folds them into a weighted
confidence value, compares that against per-device thresholds (grant /
step-up / deny), classifies access patterns with a categorical naive Bayes
model, and picks which of the three protocol schemes a login should run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import (
    DegenerateTraining,
    InvalidWeights,
    NoSchemeAvailable,
    UnknownFactor,
)

ORIGIN_LOCAL = "local"
ORIGIN_INTERNET = "internet"

IP_HOME = "home-subnet"
IP_KNOWN = "known-external"
IP_UNKNOWN = "unknown"

LABEL_LEGIT = "legitimate"
LABEL_ANOMALOUS = "anomalous"

GRANT = "grant"
STEP_UP = "step_up"
DENY = "deny"

SCHEME_MHT = "mht"
SCHEME_DORS = "dors"
SCHEME_DHS = "dhs"

FACTORS = ("credentials", "bluetooth", "ip_location", "calendar", "history")

_IP_SCORES = {IP_HOME: 1.0, IP_KNOWN: 0.5, IP_UNKNOWN: 0.0}

# Categorical features the access classifier learns over.
_FEATURES = ("hour_bucket", "weekday", "ip_class", "device_id")

MINUTES_PER_HOUR = 60
MINUTES_PER_DAY = 1440


@dataclass
class ContextSnapshot:
    """One observation of the requester's context, on simulated time."""

    uid: str
    origin: str = ORIGIN_LOCAL
    ip_class: str = IP_HOME
    bluetooth_present: bool = False
    timestamp: int = 0  # simulated minutes
    calendar_claims_present: bool = False
    credentials_ok: bool = False

    def __post_init__(self):
        if self.origin not in (ORIGIN_LOCAL, ORIGIN_INTERNET):
            raise ValueError(f"bad origin {self.origin!r}")
        if self.ip_class not in _IP_SCORES:
            raise ValueError(f"bad ip_class {self.ip_class!r}")
        if self.origin == ORIGIN_INTERNET and self.bluetooth_present:
            raise ValueError("internet origin cannot show bluetooth proximity")


@dataclass(frozen=True)
class FactorWeights:
    credentials: float = 0.40
    bluetooth: float = 0.20
    ip_location: float = 0.15
    calendar: float = 0.15
    history: float = 0.10

    def validate(self) -> None:
        values = [self.credentials, self.bluetooth, self.ip_location, self.calendar, self.history]
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise InvalidWeights("weights must lie in [0, 1]")
        if abs(sum(values) - 1.0) > 1e-9:
            raise InvalidWeights(f"weights must sum to 1, got {sum(values)}")

    def as_dict(self) -> dict[str, float]:
        return {
            "credentials": self.credentials,
            "bluetooth": self.bluetooth,
            "ip_location": self.ip_location,
            "calendar": self.calendar,
            "history": self.history,
        }


@dataclass(frozen=True)
class AccessPolicy:
    """Per-device grant threshold with a step-up band below it."""

    threshold: float
    step_up_margin: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if not 0.0 <= self.step_up_margin <= 1.0:
            raise ValueError("step-up margin must lie in [0, 1]")


@dataclass(frozen=True)
class AccessRecord:
    """One labelled access observation; hour_bucket is a 4-hour bin 0..5."""

    uid: str
    hour_bucket: int
    weekday: int
    ip_class: str
    device_id: str
    label: str | None = None

    def features(self) -> dict[str, str]:
        return {
            "hour_bucket": str(self.hour_bucket),
            "weekday": str(self.weekday),
            "ip_class": self.ip_class,
            "device_id": self.device_id,
        }


def record_from_snapshot(snapshot: ContextSnapshot, device_id: str = "unknown") -> AccessRecord:
    hour = (snapshot.timestamp // MINUTES_PER_HOUR) % 24
    weekday = (snapshot.timestamp // MINUTES_PER_DAY) % 7
    return AccessRecord(
        uid=snapshot.uid,
        hour_bucket=hour // 4,
        weekday=weekday,
        ip_class=snapshot.ip_class,
        device_id=device_id,
    )


# --- naive Bayes over categorical features ---------------------------------

@dataclass
class NaiveBayesModel:
    """Priors plus Laplace-smoothed (alpha=1) per-feature likelihoods.

    likelihoods[feature][label][category] covers every category observed in
    training; a category unseen at prediction time falls back to the
    smoothing floor 1 / (class_count + vocabulary size).
    """

    priors: dict[str, float]
    likelihoods: dict[str, dict[str, dict[str, float]]]
    class_counts: dict[str, int]
    vocab_sizes: dict[str, int]


def train_classifier(records: list[AccessRecord]) -> NaiveBayesModel:
    labelled = [r for r in records if r.label is not None]
    if not labelled:
        raise DegenerateTraining("no labelled records")
    class_counts: dict[str, int] = {}
    for rec in labelled:
        class_counts[rec.label] = class_counts.get(rec.label, 0) + 1
    if len(class_counts) < 2:
        raise DegenerateTraining(f"training needs both labels, got {sorted(class_counts)}")

    total = len(labelled)
    priors = {label: count / total for label, count in class_counts.items()}

    vocab: dict[str, set[str]] = {f: set() for f in _FEATURES}
    counts: dict[str, dict[str, dict[str, int]]] = {
        f: {label: {} for label in class_counts} for f in _FEATURES
    }
    for rec in labelled:
        feats = rec.features()
        for f in _FEATURES:
            cat = feats[f]
            vocab[f].add(cat)
            by_cat = counts[f][rec.label]
            by_cat[cat] = by_cat.get(cat, 0) + 1

    likelihoods: dict[str, dict[str, dict[str, float]]] = {}
    for f in _FEATURES:
        v = len(vocab[f])
        likelihoods[f] = {}
        for label, n in class_counts.items():
            likelihoods[f][label] = {
                cat: (counts[f][label].get(cat, 0) + 1) / (n + v) for cat in sorted(vocab[f])
            }
    return NaiveBayesModel(
        priors=priors,
        likelihoods=likelihoods,
        class_counts=dict(class_counts),
        vocab_sizes={f: len(vocab[f]) for f in _FEATURES},
    )


def classify_access(model: NaiveBayesModel, record: AccessRecord) -> float:
    """Posterior probability that the record is legitimate."""
    feats = record.features()
    log_scores: dict[str, float] = {}
    for label, prior in model.priors.items():
        score = math.log(prior)
        for f in _FEATURES:
            table = model.likelihoods[f][label]
            floor = 1.0 / (model.class_counts[label] + model.vocab_sizes[f])
            score += math.log(table.get(feats[f], floor))
        log_scores[label] = score
    peak = max(log_scores.values())
    total = sum(math.exp(s - peak) for s in log_scores.values())
    return math.exp(log_scores.get(LABEL_LEGIT, float("-inf")) - peak) / total


# --- factor scoring and decisions -------------------------------------------

def evaluate_factor(
    snapshot: ContextSnapshot,
    factor: str,
    model: NaiveBayesModel | None = None,
    device_id: str = "unknown",
) -> float:
    """Score one contextual factor in [0, 1]. The history factor delegates
    to the classifier; with no trained model it stays neutral at 0.5."""
    if factor == "credentials":
        return 1.0 if snapshot.credentials_ok else 0.0
    if factor == "bluetooth":
        return 1.0 if snapshot.bluetooth_present else 0.0
    if factor == "calendar":
        return 1.0 if snapshot.calendar_claims_present else 0.0
    if factor == "ip_location":
        return _IP_SCORES[snapshot.ip_class]
    if factor == "history":
        if model is None:
            return 0.5
        return classify_access(model, record_from_snapshot(snapshot, device_id))
    raise UnknownFactor(factor)


def score_confidence(scores: dict[str, float], weights: FactorWeights) -> float:
    """Weighted sum of factor scores; factors absent from ``scores``
    contribute zero."""
    weights.validate()
    unknown = set(scores) - set(FACTORS)
    if unknown:
        raise UnknownFactor(", ".join(sorted(unknown)))
    weight_map = weights.as_dict()
    return sum(weight_map[f] * scores.get(f, 0.0) for f in FACTORS)


def decide_access(confidence: float, policy: AccessPolicy) -> str:
    """Grant at or above the threshold, step up within the margin band
    below it, deny otherwise."""
    if confidence >= policy.threshold:
        return GRANT
    if confidence >= policy.threshold - policy.step_up_margin:
        return STEP_UP
    return DENY


# --- scheme selection ----------------------------------------------------------

@dataclass
class SchemeCapabilities:
    """What a registered user has provisioned, as the gateway sees it."""

    mht_registered: bool = False
    dors_provisioned: bool = False
    card_provisioned: bool = False
    mht_txn_count: int = 0


def select_scheme(snapshot: ContextSnapshot, caps: SchemeCapabilities) -> str:
    """Exactly one scheme per login: smart card for internet origins,
    the few-time signatures for fresh local users, history-bound mutual
    authentication otherwise."""
    if not (caps.mht_registered or caps.dors_provisioned or caps.card_provisioned):
        raise NoSchemeAvailable(snapshot.uid)
    if snapshot.origin == ORIGIN_INTERNET and caps.card_provisioned:
        return SCHEME_DHS
    if snapshot.origin == ORIGIN_LOCAL and caps.dors_provisioned and caps.mht_txn_count == 0:
        return SCHEME_DORS
    if caps.mht_registered:
        return SCHEME_MHT
    if caps.card_provisioned:
        return SCHEME_DHS
    if caps.dors_provisioned:
        return SCHEME_DORS
    raise NoSchemeAvailable(snapshot.uid)


# --- calendars ---------------------------------------------------------------

@dataclass(frozen=True)
class CalendarInterval:
    """User expected home on ``weekday`` between the two minute marks."""

    weekday: int
    start_minute: int
    end_minute: int


def calendar_claims_presence(intervals: list[CalendarInterval], timestamp: int) -> bool:
    weekday = (timestamp // MINUTES_PER_DAY) % 7
    minute_of_day = timestamp % MINUTES_PER_DAY
    return any(
        iv.weekday == weekday and iv.start_minute <= minute_of_day < iv.end_minute
        for iv in intervals
    )


# --- line-delimited JSON ingest ------------------------------------------------

def load_access_records(path) -> list[AccessRecord]:
    """Training records, one JSON object per line with fields uid,
    hour_bucket, weekday, ip_class, device_id, label."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            try:
                records.append(
                    AccessRecord(
                        uid=obj["uid"],
                        hour_bucket=int(obj["hour_bucket"]),
                        weekday=int(obj["weekday"]),
                        ip_class=obj["ip_class"],
                        device_id=obj["device_id"],
                        label=obj.get("label"),
                    )
                )
            except KeyError as exc:
                raise ValueError(f"{path}:{line_no}: missing field {exc}") from None
    return records


def load_calendar(path) -> dict[str, list[CalendarInterval]]:
    """Calendar intervals, one JSON object per line with fields uid,
    weekday, start_minute, end_minute."""
    calendars: dict[str, list[CalendarInterval]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            calendars.setdefault(obj["uid"], []).append(
                CalendarInterval(
                    weekday=int(obj["weekday"]),
                    start_minute=int(obj["start_minute"]),
                    end_minute=int(obj["end_minute"]),
                )
            )
    return calendars
