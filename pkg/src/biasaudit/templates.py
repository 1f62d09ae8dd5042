"""Probe templates, occupation list, name pairs, and prompt instantiation.

The probe set ships as versioned data files under ``biasaudit/assets`` rather
than hardcoded strings, so users can extend or replace it:

* ``templates.jsonl``  one ``{id, experiment, text}`` object per line
* ``occupations.txt``  one ``word<TAB>field_group`` entry per line
* ``names.csv``        ``male,female`` header plus one name pair per row

Everything returned by :func:`load_assets` is immutable and safe for
concurrent reads.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .errors import AssetCountMismatch, AssetMissing, MalformedTemplate

MASK = "[MASK]"
OCC_SLOT = "[OCC]"
NAMES_PREFIX = "My friend "

TEMPLATES_PER_EXPERIMENT = 51
N_OCCUPATIONS = 60
N_NAME_PAIRS = 29


class Experiment(str, Enum):
    """The three probe setups, keyed by the gendered terms they compare."""

    HE_SHE = "he-she"
    HIS_HER = "his-her"
    MALE_FEMALE_NAMES = "male-female-names"

    def pronoun_candidates(self) -> tuple[str, str] | None:
        """(male, female) filler pair, or None for the name-set experiment."""
        if self is Experiment.HE_SHE:
            return ("he", "she")
        if self is Experiment.HIS_HER:
            return ("his", "her")
        return None


class FieldGroup(str, Enum):
    MEDICAL = "medical"
    TECHNICAL = "technical"
    MANAGEMENT = "management"
    LEGAL = "legal"
    SERVICE = "service"
    EDUCATION = "education"


@dataclass(frozen=True)
class SentenceTemplate:
    """One probe sentence with a mask slot and an occupation slot."""

    id: str
    experiment: Experiment
    text: str

    def validate(self) -> None:
        if self.text.count(MASK) != 1 or self.text.count(OCC_SLOT) != 1:
            raise MalformedTemplate(
                f"template {self.id!r} must contain exactly one {MASK} and one "
                f"{OCC_SLOT}: {self.text!r}"
            )
        stripped = self.text.replace(MASK, "").replace(OCC_SLOT, "").strip()
        if not stripped:
            raise MalformedTemplate(f"template {self.id!r} is empty besides placeholders")
        if self.experiment is Experiment.MALE_FEMALE_NAMES and not self.text.startswith(NAMES_PREFIX):
            raise MalformedTemplate(
                f"name-experiment template {self.id!r} must start with {NAMES_PREFIX!r}"
            )


@dataclass(frozen=True)
class Occupation:
    word: str
    field_group: FieldGroup


@dataclass(frozen=True)
class NamePair:
    male: str
    female: str


@dataclass(frozen=True)
class Prompt:
    """A template with the occupation slot filled and the mask slot intact."""

    template_id: str
    occupation: str
    text: str


def instantiate(template: SentenceTemplate, occ: Occupation) -> Prompt:
    """Fill the occupation slot, leaving the mask for the scorer.

    Pure and deterministic; article agreement ("a"/"an") is left exactly as
    written in the template.
    """
    template.validate()
    return Prompt(
        template_id=template.id,
        occupation=occ.word,
        text=template.text.replace(OCC_SLOT, occ.word),
    )


def instantiate_gendered(template: SentenceTemplate, occ: Occupation, filler: str) -> str:
    """Reverse the masking direction: fill the gendered slot, mask the occupation.

    ``occ`` names the occupation whose slot is being masked; it does not
    appear in the output but is kept so callers can tie the text back to the
    candidate set they will score.
    """
    template.validate()
    return template.text.replace(MASK, filler).replace(OCC_SLOT, MASK)


@dataclass(frozen=True)
class AssetBundle:
    """All shipped probe data, loaded and validated."""

    templates: tuple[SentenceTemplate, ...]
    occupations: tuple[Occupation, ...]
    name_pairs: tuple[NamePair, ...]

    def templates_for(self, experiment: Experiment) -> tuple[SentenceTemplate, ...]:
        return tuple(t for t in self.templates if t.experiment is experiment)

    def occupation_words(self) -> tuple[str, ...]:
        return tuple(o.word for o in self.occupations)

    def male_names(self) -> tuple[str, ...]:
        return tuple(p.male for p in self.name_pairs)

    def female_names(self) -> tuple[str, ...]:
        return tuple(p.female for p in self.name_pairs)

    def prompts_for(self, experiment: Experiment) -> list[Prompt]:
        """Full template x occupation cross product (51 x 60 = 3060 prompts)."""
        return [
            instantiate(t, o)
            for t in self.templates_for(experiment)
            for o in self.occupations
        ]


def default_assets_path() -> Path:
    return Path(str(resources.files("biasaudit").joinpath("assets")))


def asset_fingerprint(path: Path | None = None) -> str:
    """sha256 over the three asset files, for run manifests."""
    path = Path(path) if path is not None else default_assets_path()
    digest = hashlib.sha256()
    for name in ("templates.jsonl", "occupations.txt", "names.csv"):
        digest.update(name.encode())
        digest.update((path / name).read_bytes())
    return digest.hexdigest()


def load_assets(path: Path | str | None = None) -> AssetBundle:
    """Load and validate the probe assets from ``path`` (or the shipped set).

    Raises AssetMissing if a file is absent and AssetCountMismatch if any
    shipped-count contract (51 per experiment, 60 occupations, 29 pairs,
    unique ids) is violated.
    """
    path = Path(path) if path is not None else default_assets_path()

    templates = _load_templates(path / "templates.jsonl")
    occupations = _load_occupations(path / "occupations.txt")
    name_pairs = _load_name_pairs(path / "names.csv")
    return AssetBundle(templates=templates, occupations=occupations, name_pairs=name_pairs)


def _require(file: Path) -> Path:
    if not file.is_file():
        raise AssetMissing(f"asset file not found: {file}")
    return file


def _load_templates(file: Path) -> tuple[SentenceTemplate, ...]:
    out: list[SentenceTemplate] = []
    with open(_require(file), encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                tpl = SentenceTemplate(
                    id=str(obj["id"]),
                    experiment=Experiment(obj["experiment"]),
                    text=str(obj["text"]),
                )
            except (KeyError, ValueError) as exc:
                raise AssetCountMismatch(f"{file}:{lineno}: unparseable template entry: {exc}")
            tpl.validate()
            out.append(tpl)

    ids = [t.id for t in out]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise AssetCountMismatch(f"duplicate template ids: {dupes}")
    for exp in Experiment:
        n = sum(1 for t in out if t.experiment is exp)
        if n != TEMPLATES_PER_EXPERIMENT:
            raise AssetCountMismatch(
                f"expected {TEMPLATES_PER_EXPERIMENT} templates for {exp.value}, found {n}"
            )
    return tuple(out)


def _load_occupations(file: Path) -> tuple[Occupation, ...]:
    out: list[Occupation] = []
    with open(_require(file), encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                word, group = line.split("\t")
                out.append(Occupation(word=word.strip().lower(), field_group=FieldGroup(group.strip())))
            except ValueError as exc:
                raise AssetCountMismatch(f"{file}:{lineno}: bad occupation entry: {exc}")
    words = [o.word for o in out]
    if len(out) != N_OCCUPATIONS or len(set(words)) != N_OCCUPATIONS:
        raise AssetCountMismatch(
            f"expected {N_OCCUPATIONS} distinct occupations, found {len(out)} "
            f"({len(set(words))} distinct)"
        )
    return tuple(out)


def _load_name_pairs(file: Path) -> tuple[NamePair, ...]:
    out: list[NamePair] = []
    with open(_require(file), encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["male", "female"]:
            raise AssetCountMismatch(f"{file}: expected header 'male,female', got {reader.fieldnames}")
        for row in reader:
            out.append(NamePair(male=row["male"].strip(), female=row["female"].strip()))
    names = [n for p in out for n in (p.male, p.female)]
    if len(out) != N_NAME_PAIRS or len(set(names)) != 2 * N_NAME_PAIRS:
        raise AssetCountMismatch(
            f"expected {N_NAME_PAIRS} pairs with {2 * N_NAME_PAIRS} distinct names, "
            f"found {len(out)} pairs / {len(set(names))} distinct names"
        )
    return tuple(out)
