"""Skill extraction pipeline: filter, embed, align to a taxonomy, personalize.

Each skill's raw score is the maximum cosine similarity between its
descriptor embedding and any retained syllabus sentence; per-course vectors
are combined into a student profile with grade and course-level weights.

The reference embedding backend is deterministic feature hashing (word
unigrams and bigrams, signed buckets, L2-normalized), so derivations are
bit-reproducible without model downloads. A remote embedding service can be
plugged in behind the same contract.
"""

from __future__ import annotations

import hashlib
import json
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .canonical import canonical_parse, canonical_serialize, digest
from .errors import BadK, EmptyTaxonomy, NoEvidence, ProviderUnavailable, UnknownWeightKey

SKILL_KINDS = ("dwa", "task", "ability")


@dataclass(frozen=True)
class SkillDescriptor:
    skill_id: str
    name: str
    descriptor_text: str
    kind: str = "dwa"

    def to_dict(self) -> dict:
        return {
            "skill_id": self.skill_id,
            "name": self.name,
            "descriptor_text": self.descriptor_text,
            "kind": self.kind,
        }


@dataclass
class SkillTaxonomy:
    skills: list[SkillDescriptor]
    taxonomy_id: str = ""

    def __post_init__(self) -> None:
        if not self.skills:
            raise EmptyTaxonomy("a taxonomy needs at least one skill")
        ids = [s.skill_id for s in self.skills]
        if len(ids) != len(set(ids)):
            raise ValueError("skill ids must be unique within a taxonomy")
        if not self.taxonomy_id:
            self.taxonomy_id = digest(canonical_serialize([s.to_dict() for s in self.skills])).hex()[:16]

    def __len__(self) -> int:
        return len(self.skills)

    def ids(self) -> list[str]:
        return [s.skill_id for s in self.skills]

    def name_of(self, skill_id: str) -> str:
        for s in self.skills:
            if s.skill_id == skill_id:
                return s.name
        raise KeyError(skill_id)


def load_taxonomy(path: str | Path) -> SkillTaxonomy:
    """Read a tab-separated taxonomy: skill_id, kind, name, descriptor text."""
    skills = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        skill_id, kind, name, descriptor = line.split("\t", 3)
        skills.append(SkillDescriptor(skill_id=skill_id, name=name, descriptor_text=descriptor, kind=kind))
    return SkillTaxonomy(skills=skills)


@dataclass
class CourseRecord:
    course_id: str
    title: str
    level: int
    grade: str
    syllabus_sentences: list[str]

    def to_dict(self) -> dict:
        return {
            "course_id": self.course_id,
            "title": self.title,
            "level": self.level,
            "grade": self.grade,
            "syllabus_sentences": self.syllabus_sentences,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CourseRecord":
        return cls(
            course_id=d["course_id"],
            title=d["title"],
            level=int(d["level"]),
            grade=d["grade"],
            syllabus_sentences=list(d["syllabus_sentences"]),
        )


def load_transcript(path: str | Path) -> list[CourseRecord]:
    records = canonical_parse(Path(path).read_bytes())
    return [CourseRecord.from_dict(r) for r in records]


# --- pedagogical sentence filter ----------------------------------------------

_BOILERPLATE = re.compile(
    r"office hours|grading|grade breakdown|attendance|textbook|required reading"
    r"|prerequisite|late polic|academic integrity|plagiarism|honor code"
    r"|midterm|final exam|exam date|quiz|homework is due|due date"
    r"|@|www\.|http|room \d|syllabus is subject to change|no class|holiday"
    r"|instructor|teaching assistant|\bta\b|contact|phone",
    re.IGNORECASE,
)

_OUTCOME_PHRASES = re.compile(
    r"students will|learners will|you will|upon (successful )?completion"
    r"|by the end of (this|the) course|be able to"
    r"|this course (covers|introduces|teaches|explores|examines)",
    re.IGNORECASE,
)

_OUTCOME_VERBS = (
    "analyze", "apply", "assess", "build", "compare", "compute", "construct",
    "create", "demonstrate", "derive", "design", "develop", "evaluate",
    "explain", "formulate", "identify", "implement", "interpret", "model",
    "practice", "solve", "understand", "use", "write",
)
_LEADING_VERB = re.compile(r"^\s*(" + "|".join(_OUTCOME_VERBS) + r")\b", re.IGNORECASE)


def filter_pedagogical(sentences: list[str]) -> list[str]:
    """Keep learning-outcome sentences, drop administrative boilerplate.

    Boilerplate patterns veto first; what remains must match an outcome
    phrase or open with an outcome verb. Filtering is deliberately
    aggressive: an empty result is valid.
    """
    kept = []
    for sentence in sentences:
        if not sentence.strip():
            continue
        if _BOILERPLATE.search(sentence):
            continue
        if _OUTCOME_PHRASES.search(sentence) or _LEADING_VERB.match(sentence):
            kept.append(sentence)
    return kept


# --- embedding providers --------------------------------------------------------

_TOKEN = re.compile(r"[a-z0-9+#]+")


class HashingEmbedder:
    """Deterministic signed feature hashing of word unigrams and bigrams."""

    def __init__(self, dimension: int = 256):
        self.dimension = dimension

    def _features(self, text: str) -> list[str]:
        tokens = _TOKEN.findall(text.lower())
        if not tokens:
            return ["\x00empty"]
        return tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension)
        for feature in self._features(text):
            h = hashlib.sha256(feature.encode("utf-8")).digest()
            index = int.from_bytes(h[:4], "big") % self.dimension
            sign = 1.0 if h[4] & 1 else -1.0
            vec[index] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:  # all features cancelled in one bucket
            vec[0] = 1.0
            norm = 1.0
        return vec / norm


class RemoteEmbedder:
    """Client for an external embedding service behind the provider contract.

    Request body is {"text": ...}; the response must carry a d-length
    "vector". Any transport or contract failure raises ProviderUnavailable;
    there is no silent fallback.
    """

    def __init__(self, url: str, dimension: int, timeout: float = 10.0):
        self.url = url
        self.dimension = dimension
        self.timeout = timeout

    def embed(self, text: str) -> np.ndarray:
        body = json.dumps({"text": text}).encode("utf-8")
        request = urllib.request.Request(
            self.url, data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                payload = json.loads(response.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise ProviderUnavailable(f"embedding service at {self.url}: {exc}") from exc
        vector = payload.get("vector")
        if not isinstance(vector, list) or len(vector) != self.dimension:
            raise ProviderUnavailable(
                f"embedding service returned a malformed vector (want length {self.dimension})"
            )
        vec = np.asarray(vector, dtype=float)
        norm = np.linalg.norm(vec)
        if not np.isfinite(norm) or norm == 0.0:
            raise ProviderUnavailable("embedding service returned a degenerate vector")
        return vec / norm


# --- scoring -------------------------------------------------------------------


@dataclass
class SkillVector:
    taxonomy_ref: str
    values: np.ndarray

    def to_dict(self) -> dict:
        return {"taxonomy_ref": self.taxonomy_ref, "values": [float(v) for v in self.values]}


@dataclass
class WeightConfig:
    grade_weights: dict[str, float]
    level_weights: dict[str, float]
    extensions: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for table in (self.grade_weights, self.level_weights, self.extensions):
            for key, w in table.items():
                if w < 0:
                    raise ValueError(f"weight for {key!r} must be nonnegative")

    @classmethod
    def default(cls) -> "WeightConfig":
        return cls(
            grade_weights={
                "A": 1.0, "A-": 0.95, "B+": 0.9, "B": 0.8,
                "B-": 0.7, "C": 0.5, "D": 0.3, "F": 0.0,
            },
            level_weights={"100": 0.8, "200": 0.9, "300": 1.0, "400+": 1.2},
        )

    def to_dict(self) -> dict:
        return {
            "grade_weights": self.grade_weights,
            "level_weights": self.level_weights,
            "extensions": self.extensions,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WeightConfig":
        return cls(
            grade_weights=dict(d["grade_weights"]),
            level_weights=dict(d["level_weights"]),
            extensions=dict(d.get("extensions", {})),
        )


def level_band(level: int) -> str:
    if level >= 400:
        return "400+"
    if level >= 300:
        return "300"
    if level >= 200:
        return "200"
    return "100"


def score_skill(sentence_vectors: list[np.ndarray], skill_vector: np.ndarray) -> float:
    """Maximum cosine similarity between the skill and any sentence."""
    if not sentence_vectors:
        raise NoEvidence("no sentence embeddings to score against")
    return float(max(float(np.dot(v, skill_vector)) for v in sentence_vectors))


def embed_taxonomy(taxonomy: SkillTaxonomy, provider) -> list[np.ndarray]:
    return [provider.embed(s.descriptor_text) for s in taxonomy.skills]


def course_vector(
    course: CourseRecord,
    taxonomy: SkillTaxonomy,
    provider,
    *,
    taxonomy_vectors: list[np.ndarray] | None = None,
) -> SkillVector:
    """Per-course skill vector: entry i is the max-cosine score for skill i."""
    retained = filter_pedagogical(course.syllabus_sentences)
    if not retained:
        raise NoEvidence(f"course {course.course_id} has no retained outcome sentences")
    sentence_vectors = [provider.embed(s) for s in retained]
    if taxonomy_vectors is None:
        taxonomy_vectors = embed_taxonomy(taxonomy, provider)
    values = np.array([score_skill(sentence_vectors, sv) for sv in taxonomy_vectors])
    return SkillVector(taxonomy_ref=taxonomy.taxonomy_id, values=values)


def personalize(
    courses: list[CourseRecord],
    vectors: list[SkillVector],
    weights: WeightConfig,
) -> SkillVector:
    """Weighted sum of per-course vectors: v = sum_c v_c * w_grade * w_level."""
    if len(courses) != len(vectors) or not courses:
        raise ValueError("need one vector per course")
    refs = {v.taxonomy_ref for v in vectors}
    if len(refs) != 1:
        raise ValueError("vectors span multiple taxonomies")
    total = np.zeros_like(vectors[0].values)
    for course, vector in zip(courses, vectors):
        if course.grade not in weights.grade_weights:
            raise UnknownWeightKey(f"no grade weight for {course.grade!r}")
        band = level_band(course.level)
        if band not in weights.level_weights:
            raise UnknownWeightKey(f"no level weight for band {band!r}")
        total = total + vector.values * weights.grade_weights[course.grade] * weights.level_weights[band]
    return SkillVector(taxonomy_ref=vectors[0].taxonomy_ref, values=total)


def top_k(vector: SkillVector, taxonomy: SkillTaxonomy, k: int) -> list[tuple[str, float]]:
    """Top k skills, descending by score with ascending skill_id on ties."""
    m = len(taxonomy)
    if not 1 <= k <= m:
        raise BadK(f"k must lie in [1, {m}], got {k}")
    ranked = sorted(
        zip(taxonomy.ids(), (float(v) for v in vector.values)),
        key=lambda pair: (-pair[1], pair[0]),
    )
    return ranked[:k]
