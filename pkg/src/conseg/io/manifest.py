"""Tab-separated cohort manifests.

One case per line::

    case_id <TAB> split <TAB> prob_path <TAB> label_path|- [<TAB> ref_seg_path|- [<TAB> mask_path|-]]

Blank lines and lines starting with ``#`` are ignored. Relative paths are
resolved against the manifest's directory.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

SPLITS = ("train", "validation", "calibration", "test")
_NONE = "-"


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    case_id: str
    split: str
    prob_path: Path
    label_path: Optional[Path] = None
    ref_seg_path: Optional[Path] = None
    mask_path: Optional[Path] = None


@dataclass
class CohortManifest:
    entries: list

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.case_id in seen:
                raise ManifestError(f"duplicate case_id {e.case_id!r}")
            if e.split not in SPLITS:
                raise ManifestError(
                    f"case {e.case_id!r}: unknown split {e.split!r}; "
                    f"allowed: {', '.join(SPLITS)}"
                )
            seen.add(e.case_id)

    def __len__(self):
        return len(self.entries)

    def select(self, split):
        return [e for e in self.entries if e.split == split]


def _opt(field, base):
    if field == _NONE or field == "":
        return None
    p = Path(field)
    return p if p.is_absolute() else base / p


def read_manifest(path, check_files=True) -> CohortManifest:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    base = path.parent
    entries = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if not 4 <= len(fields) <= 6:
            raise ManifestError(
                f"{path}:{lineno}: expected 4 to 6 tab-separated fields, got {len(fields)}"
            )
        fields += [_NONE] * (6 - len(fields))
        case_id, split = fields[0].strip(), fields[1].strip()
        entries.append(ManifestEntry(
            case_id, split, _opt(fields[2].strip(), base),
            *(_opt(f.strip(), base) for f in fields[3:6]),
        ))
    manifest = CohortManifest(entries)
    if check_files:
        for e in entries:
            if e.prob_path is None:
                raise ManifestError(f"case {e.case_id!r}: missing probability path")
            for p in (e.prob_path, e.label_path, e.ref_seg_path, e.mask_path):
                if p is not None and not p.is_file():
                    raise ManifestError(f"case {e.case_id!r}: file not found: {p}")
    return manifest


def _fmt(p, base):
    if p is None:
        return _NONE
    p = Path(p)
    try:
        return p.relative_to(base).as_posix()
    except ValueError:
        return str(p)


def write_manifest(manifest: CohortManifest, path) -> None:
    """Write ``manifest``; paths under the manifest's directory become relative."""
    path = Path(path)
    base = path.parent
    lines = ["# case_id\tsplit\tprob_path\tlabel_path\tref_seg_path\tmask_path"]
    for e in manifest.entries:
        cols = [e.case_id, e.split, _fmt(e.prob_path, base), _fmt(e.label_path, base)]
        extra = [_fmt(e.ref_seg_path, base), _fmt(e.mask_path, base)]
        while extra and extra[-1] == _NONE:
            extra.pop()
        lines.append("\t".join(cols + extra))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
