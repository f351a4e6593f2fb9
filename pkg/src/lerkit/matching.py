"""Verifier-side skills-only matching and the bias-opportunity audit.

Matching consumes attested skill claims alone. Non-skill profile fields are
not parameters of the scoring path, so the shipped matcher is invariant to
them by construction; the audit harness quantifies that by measuring the
expected squared score change under randomized non-skill edits with skills
held fixed (zero for any skill-only matcher) and the corresponding
decision-flip probability.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Callable

import numpy as np

from .errors import EmptyRequirement, NoCandidateSkills, UnverifiedInput

_PARENTHETICAL = re.compile(r"\(([^)]*)\)")
_WHITESPACE = re.compile(r"\s+")

COMBINER_SEMSIM = "semsim"
COMBINER_OVERLAP = "overlap"
COMBINER_MIX = "mix"


def normalize_name(name: str) -> str:
    return _WHITESPACE.sub(" ", name.strip().lower())


def expand_aliases(name: str, alias_table: dict[str, list[str]] | None = None) -> set[str]:
    """All normalized forms a skill name answers to.

    Parentheticals contribute both the stripped base and their content, so
    "Version Control (Git)" matches "version control" and "git".
    """
    normalized = normalize_name(name)
    forms = {normalized}
    stripped = normalize_name(_PARENTHETICAL.sub(" ", name))
    if stripped:
        forms.add(stripped)
    for inner in _PARENTHETICAL.findall(name):
        inner_norm = normalize_name(inner)
        if inner_norm:
            forms.add(inner_norm)
    if alias_table:
        for form in list(forms):
            for alias in alias_table.get(form, []):
                forms.add(normalize_name(alias))
    return forms


def load_alias_table(path: str | Path) -> dict[str, list[str]]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


@dataclass
class JobRequirement:
    job_id: str
    required_skills: set[str]
    descriptor_texts: dict[str, str] = field(default_factory=dict)
    threshold: float = 0.75

    def __post_init__(self) -> None:
        if not self.required_skills:
            raise EmptyRequirement(f"job {self.job_id} lists no required skills")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "required_skills": sorted(self.required_skills),
            "descriptor_texts": self.descriptor_texts,
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JobRequirement":
        return cls(
            job_id=d["job_id"],
            required_skills=set(d["required_skills"]),
            descriptor_texts=dict(d.get("descriptor_texts", {})),
            threshold=float(d["threshold"]),
        )


def load_job(path: str | Path) -> JobRequirement:
    return JobRequirement.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class NonSkillProfile:
    """Resume fields a skills-only matcher must never see."""

    z: dict[str, str] = field(default_factory=dict)

    def assert_disjoint(self, skill_keys: set[str]) -> None:
        clash = set(self.z) & skill_keys
        if clash:
            raise ValueError(f"non-skill fields collide with skill claims: {sorted(clash)}")


@dataclass
class AttestedSkillClaims:
    """Skill claims lifted from a verified presentation.

    The ``verified`` marker is set by the protocol layer after the full
    acceptance rule set passed; matching refuses inputs without it.
    """

    skill_names: list[str]
    scores: dict[str, float] = field(default_factory=dict)
    verified: bool = False


@dataclass
class MatchResult:
    overlap: float
    sem_sim: float
    per_skill: dict[str, tuple[str, float]]
    score: float
    decision: bool
    combiner: str = COMBINER_SEMSIM
    overlap_kind: str = "presented-claims"

    def to_dict(self) -> dict:
        return {
            "overlap": self.overlap,
            "sem_sim": self.sem_sim,
            "per_skill": {k: [v[0], v[1]] for k, v in self.per_skill.items()},
            "score": self.score,
            "decision": self.decision,
            "combiner": self.combiner,
            "overlap_kind": self.overlap_kind,
        }


def binary_overlap(
    candidate_skills: set[str],
    job: JobRequirement,
    alias_table: dict[str, list[str]] | None = None,
) -> float:
    """|matched required skills| / |required skills|, exact rational."""
    if not job.required_skills:
        raise EmptyRequirement(f"job {job.job_id} lists no required skills")
    candidate_forms: set[str] = set()
    for name in candidate_skills:
        candidate_forms |= expand_aliases(name, alias_table)
    matched = sum(
        1 for req in job.required_skills if expand_aliases(req, alias_table) & candidate_forms
    )
    return matched / len(job.required_skills)


def top_k_overlap(
    ranked_candidates: list[str],
    k: int,
    job: JobRequirement,
    alias_table: dict[str, list[str]] | None = None,
) -> float:
    """Overlap restricted to the candidate's top-k ranked skills."""
    return binary_overlap(set(ranked_candidates[:k]), job, alias_table)


def sem_sim(
    candidate_skills: set[str],
    job: JobRequirement,
    provider,
) -> tuple[float, dict[str, tuple[str, float]]]:
    """Mean over required skills of the max cosine to any candidate skill."""
    if not candidate_skills:
        raise NoCandidateSkills(f"no candidate skills to compare against job {job.job_id}")
    candidates = sorted(candidate_skills)
    candidate_vectors = [provider.embed(normalize_name(c)) for c in candidates]
    per_skill: dict[str, tuple[str, float]] = {}
    total = 0.0
    for req in sorted(job.required_skills):
        req_vector = provider.embed(normalize_name(req))
        best_name, best_sim = "", -2.0
        for name, vec in zip(candidates, candidate_vectors):
            sim = float(np.dot(req_vector, vec))
            if sim > best_sim:
                best_name, best_sim = name, sim
        per_skill[req] = (best_name, best_sim)
        total += best_sim
    return total / len(job.required_skills), per_skill


def decide(
    claims: AttestedSkillClaims,
    job: JobRequirement,
    provider,
    combiner: str = COMBINER_SEMSIM,
    mix_alpha: float = 0.5,
    alias_table: dict[str, list[str]] | None = None,
) -> MatchResult:
    """Threshold decision over attested skill claims only.

    The decision boundary is inclusive: score exactly at the job threshold
    accepts.
    """
    if not claims.verified:
        raise UnverifiedInput("matching requires claims from a verified presentation")
    candidate = set(claims.skill_names)
    overlap = binary_overlap(candidate, job, alias_table)
    similarity, per_skill = sem_sim(candidate, job, provider)
    if combiner == COMBINER_SEMSIM:
        score = similarity
    elif combiner == COMBINER_OVERLAP:
        score = overlap
    elif combiner == COMBINER_MIX:
        score = mix_alpha * overlap + (1.0 - mix_alpha) * similarity
    else:
        raise ValueError(f"unknown combiner {combiner!r}")
    return MatchResult(
        overlap=overlap,
        sem_sim=similarity,
        per_skill=per_skill,
        score=score,
        decision=score >= job.threshold,
        combiner=combiner,
    )


# --- bias-opportunity audit ------------------------------------------------------


@dataclass(frozen=True)
class BoiEstimate:
    value: float
    trials: int
    matcher_id: str

    def to_dict(self) -> dict:
        return {"value": self.value, "trials": self.trials, "matcher_id": self.matcher_id}


Matcher = Callable[[object, NonSkillProfile], float]
ZEditGenerator = Callable[[Random], NonSkillProfile]


def skill_only_matcher(
    job: JobRequirement,
    provider,
    combiner: str = COMBINER_SEMSIM,
    alias_table: dict[str, list[str]] | None = None,
) -> Matcher:
    """The shipped matcher: scores from skills alone, z is not an input.

    The returned callable takes (skills, profile) so the audit harness can
    inject profile edits, but the profile never reaches the scoring path.
    """

    memo: dict[frozenset, float] = {}

    def score(candidate_skills: object, _z: NonSkillProfile) -> float:
        names = frozenset(candidate_skills)  # type: ignore[arg-type]
        cached = memo.get(names)
        if cached is not None:
            return cached
        overlap = binary_overlap(set(names), job, alias_table)
        if combiner == COMBINER_OVERLAP:
            result = overlap
        else:
            similarity, _ = sem_sim(set(names), job, provider)
            result = similarity if combiner == COMBINER_SEMSIM else 0.5 * overlap + 0.5 * similarity
        memo[names] = result
        return result

    return score


def synthetic_institution_matcher(base: float = 0.5, bump: float = 0.1, favored: str = "X") -> Matcher:
    """Deliberately z-sensitive matcher used to demonstrate a nonzero audit."""

    def score(_skills: object, z: NonSkillProfile) -> float:
        return base + (bump if z.z.get("institution") == favored else 0.0)

    return score


def default_z_edit_generator(rng: Random) -> NonSkillProfile:
    """Randomized non-skill resume edits: name, institution, dates, free text."""
    return NonSkillProfile(
        z={
            "name": rng.choice(["A. Doe", "B. Roe", "C. Poe", "D. Noe"]),
            "institution": rng.choice(["X", "Y"]),
            "dates": f"20{rng.randrange(10, 30):02d}-20{rng.randrange(10, 30):02d}",
            "free_text": rng.choice(["volunteer", "club member", "athlete", "musician"]),
        }
    )


def estimate_boi(
    matcher: Matcher,
    v_samples: list,
    z_edit_generator: ZEditGenerator,
    trials: int,
    *,
    seed: int = 0,
    matcher_id: str = "matcher",
    log: Callable[[str], None] | None = None,
) -> BoiEstimate:
    """Monte-Carlo mean of squared score differences under paired z edits."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = Random(seed)
    total = 0.0
    for trial in range(trials):
        v = v_samples[trial % len(v_samples)]
        z, z_prime = z_edit_generator(rng), z_edit_generator(rng)
        diff = matcher(v, z) - matcher(v, z_prime)
        total += diff * diff
        if log is not None:
            log(f"trial={trial} sq_diff={diff * diff!r}")
    return BoiEstimate(value=total / trials, trials=trials, matcher_id=matcher_id)


def flip_probability_audit(
    matcher: Matcher,
    v_samples: list,
    z_edit_generator: ZEditGenerator,
    tau: float,
    trials: int,
    *,
    seed: int = 0,
    log: Callable[[str], None] | None = None,
) -> float:
    """Fraction of paired z edits that flip the threshold decision."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = Random(seed)
    flips = 0
    for trial in range(trials):
        v = v_samples[trial % len(v_samples)]
        z, z_prime = z_edit_generator(rng), z_edit_generator(rng)
        flipped = (matcher(v, z) >= tau) != (matcher(v, z_prime) >= tau)
        flips += int(flipped)
        if log is not None:
            log(f"trial={trial} flipped={flipped}")
    return flips / trials
