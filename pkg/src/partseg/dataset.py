"""Annotated datasets on disk, in the ShapeNet-part directory convention.

``root/<category>/*.txt`` holds one ``xyz_label`` cloud per file.  An optional
``root/<category>/parts.txt`` maps the integer labels to part names, one
``<int> <name>`` pair per line; without it a label ``k`` of category ``c``
is called ``c_k`` so that names stay unique across categories.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .pointcloud import CloudError, PointCloud, format_cloud, load_cloud

PARTS_FILE = "parts.txt"


class DatasetError(ValueError):
    pass


def read_part_names(path) -> dict:
    names = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 2:
            raise DatasetError(f"{path}:{lineno}: expected '<int> <name>'")
        try:
            names[int(fields[0])] = fields[1]
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: bad label id {fields[0]!r}") from None
    return names


def load_dataset(root) -> list[PointCloud]:
    """Every cloud under ``root``, categories and files in sorted order."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    clouds = []
    for cat_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        category = cat_dir.name
        names_path = cat_dir / PARTS_FILE
        names = read_part_names(names_path) if names_path.exists() else None
        for path in sorted(cat_dir.glob("*.txt")):
            if path.name == PARTS_FILE:
                continue
            try:
                cloud = load_cloud(path, "xyz_label")
            except CloudError as exc:
                raise DatasetError(str(exc)) from None
            ids = cloud.part_labels.tolist()
            if names is None:
                labels = [f"{category}_{k}" for k in ids]
            else:
                missing = sorted(set(ids) - names.keys())
                if missing:
                    raise DatasetError(f"{path}: label(s) {missing} not listed in {names_path}")
                labels = [names[k] for k in ids]
            clouds.append(PointCloud(cloud.points, part_labels=np.array(labels, dtype=object),
                                     category=category))
    if not clouds:
        raise DatasetError(f"dataset {root} contains no clouds")
    return clouds


def save_dataset(clouds: Sequence[PointCloud], root) -> list[Path]:
    """Write annotated clouds below ``root``; part ids follow sorted part names per category."""
    root = Path(root)
    by_cat: dict = {}
    for cloud in clouds:
        if cloud.category is None or cloud.part_labels is None:
            raise DatasetError("every cloud needs a category and part labels")
        by_cat.setdefault(str(cloud.category), []).append(cloud)
    written = []
    for category, members in by_cat.items():
        cat_dir = root / category
        cat_dir.mkdir(parents=True, exist_ok=True)
        names = sorted({str(x) for c in members for x in c.part_labels.tolist()})
        ids = {name: i for i, name in enumerate(names)}
        (cat_dir / PARTS_FILE).write_text("".join(f"{i} {name}\n" for name, i in ids.items()))
        for j, cloud in enumerate(members):
            labelled = PointCloud(cloud.points, part_labels=np.array([ids[str(x)] for x in cloud.part_labels]))
            path = cat_dir / f"{category}_{j:04d}.txt"
            path.write_text(format_cloud(labelled, "xyz_label"))
            written.append(path)
    return written
