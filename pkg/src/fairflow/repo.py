"""Managed image repository: object tree, filesets, and annotation blocks.

Objects form a typed containment tree (Project/Dataset/Screen/Plate/Image).
A fileset records how pixel data entered the repository: each entry is a
link under the managed root pointing at a target file. IN_PLACE transfer
creates a symlink and never copies bytes; COPY duplicates the file. Ordered
key-value blocks hang off any object and back the search index.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .db import Database, utc_now
from .errors import FairflowError

log = logging.getLogger("fairflow.repo")


class ObjectKind(str, Enum):
    PROJECT = "Project"
    DATASET = "Dataset"
    SCREEN = "Screen"
    PLATE = "Plate"
    IMAGE = "Image"


class TransferMode(str, Enum):
    COPY = "COPY"
    IN_PLACE = "IN_PLACE"


# Legal parent kinds per object kind; None means the tree root.
_LEGAL_PARENTS: dict[ObjectKind, set[ObjectKind | None]] = {
    ObjectKind.PROJECT: {None},
    ObjectKind.SCREEN: {None},
    ObjectKind.DATASET: {None, ObjectKind.PROJECT},
    ObjectKind.PLATE: {ObjectKind.SCREEN},
    ObjectKind.IMAGE: {ObjectKind.DATASET, ObjectKind.PLATE},
}


@dataclass(frozen=True)
class RepoObject:
    id: int
    kind: ObjectKind
    name: str
    owner: str
    group: str
    parent_id: int | None
    created_at: str
    acquired_at: str | None = None


@dataclass(frozen=True)
class FilesetEntry:
    link_path: str
    target_path: str


@dataclass(frozen=True)
class Fileset:
    id: int
    group: str
    transfer_mode: TransferMode
    image_ids: tuple[int, ...]
    entries: tuple[FilesetEntry, ...]
    created_at: str


@dataclass(frozen=True)
class KeyValueBlock:
    namespace: str
    pairs: tuple[tuple[str, str], ...]
    created_at: str


_SCHEMA = """
CREATE TABLE IF NOT EXISTS repo_objects (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    kind TEXT NOT NULL,
    name TEXT NOT NULL,
    owner TEXT NOT NULL,
    grp TEXT NOT NULL,
    parent_id INTEGER,
    created_at TEXT NOT NULL,
    acquired_at TEXT
);
CREATE TABLE IF NOT EXISTS repo_users (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    name TEXT NOT NULL UNIQUE
);
CREATE TABLE IF NOT EXISTS repo_groups (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    name TEXT NOT NULL UNIQUE
);
CREATE TABLE IF NOT EXISTS filesets (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    grp TEXT NOT NULL,
    transfer_mode TEXT NOT NULL,
    image_ids_json TEXT NOT NULL,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS fileset_entries (
    fileset_id INTEGER NOT NULL,
    link_path TEXT NOT NULL,
    target_path TEXT NOT NULL,
    PRIMARY KEY(fileset_id, link_path)
);
CREATE TABLE IF NOT EXISTS annotations (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    object_id INTEGER NOT NULL,
    namespace TEXT NOT NULL,
    pairs_json TEXT NOT NULL,
    created_at TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_annotations_object ON annotations(object_id, id);
"""


class ImageRepository:
    def __init__(self, db: Database, managed_root: str | Path):
        self.db = db
        self.managed_root = Path(managed_root)
        db.executescript(_SCHEMA)

    # -- identity -------------------------------------------------------------

    def ensure_user(self, name: str) -> int:
        with self.db.tx() as cur:
            row = cur.execute("SELECT id FROM repo_users WHERE name = ?", (name,)).fetchone()
            if row:
                return row["id"]
            cur.execute("INSERT INTO repo_users(name) VALUES(?)", (name,))
            return cur.lastrowid

    def ensure_group(self, name: str) -> int:
        with self.db.tx() as cur:
            row = cur.execute("SELECT id FROM repo_groups WHERE name = ?", (name,)).fetchone()
            if row:
                return row["id"]
            cur.execute("INSERT INTO repo_groups(name) VALUES(?)", (name,))
            return cur.lastrowid

    def user_name(self, user_id: int) -> str:
        row = self.db.query_one("SELECT name FROM repo_users WHERE id = ?", (user_id,))
        return row["name"] if row else str(user_id)

    def group_name(self, group_id: int) -> str:
        row = self.db.query_one("SELECT name FROM repo_groups WHERE id = ?", (group_id,))
        return row["name"] if row else str(group_id)

    # -- object tree ------------------------------------------------------------

    def create_object(
        self,
        kind: ObjectKind | str,
        name: str,
        owner: str,
        group: str,
        parent_id: int | None = None,
        acquired_at: str | None = None,
    ) -> RepoObject:
        kind = ObjectKind(kind)
        parent_kind: ObjectKind | None = None
        if parent_id is not None:
            parent = self.get_object(parent_id)
            parent_kind = parent.kind
        if parent_kind not in _LEGAL_PARENTS[kind]:
            where = parent_kind.value if parent_kind else "the root"
            raise FairflowError(
                "ILLEGAL_PARENT", f"a {kind.value} cannot be created under {where}"
            )
        now = utc_now()
        with self.db.tx() as cur:
            cur.execute(
                "INSERT INTO repo_objects(kind, name, owner, grp, parent_id, created_at,"
                " acquired_at) VALUES(?,?,?,?,?,?,?)",
                (kind.value, name, owner, group, parent_id, now, acquired_at),
            )
            oid = cur.lastrowid
        return RepoObject(oid, kind, name, owner, group, parent_id, now, acquired_at)

    def get_object(self, object_id: int) -> RepoObject:
        row = self.db.query_one("SELECT * FROM repo_objects WHERE id = ?", (object_id,))
        if row is None:
            raise FairflowError("UNKNOWN_OBJECT", f"no object with id {object_id}")
        return _row_to_object(row)

    def list_children(self, parent_id: int | None) -> list[RepoObject]:
        if parent_id is None:
            rows = self.db.query(
                "SELECT * FROM repo_objects WHERE parent_id IS NULL ORDER BY id"
            )
        else:
            self.get_object(parent_id)
            rows = self.db.query(
                "SELECT * FROM repo_objects WHERE parent_id = ? ORDER BY id", (parent_id,)
            )
        return [_row_to_object(r) for r in rows]

    def is_descendant(self, object_id: int, ancestor_id: int) -> bool:
        current = self.get_object(object_id)
        while current.parent_id is not None:
            if current.parent_id == ancestor_id:
                return True
            current = self.get_object(current.parent_id)
        return False

    # -- filesets --------------------------------------------------------------

    def register_fileset(
        self,
        image_names: Sequence[str],
        destination_id: int,
        targets: Sequence[str | Path],
        transfer_mode: TransferMode | str,
        owner: str,
        group: str,
        acquired_at: str | None = None,
    ) -> Fileset:
        """Create one Image per name under the destination and link the targets.

        IN_PLACE lays a symlink per target under
        ``<managed_root>/<group>/<fileset-id>/<basename>`` without reading a
        byte of pixel data; COPY duplicates each file to that location.
        """
        transfer_mode = TransferMode(transfer_mode)
        if not targets or not image_names:
            raise FairflowError("TARGET_MISSING", "a fileset needs at least one target file")
        try:
            destination = self.get_object(destination_id)
        except FairflowError:
            raise FairflowError(
                "BROKEN_DESTINATION", f"destination {destination_id} does not exist"
            )
        if destination.kind not in (ObjectKind.DATASET, ObjectKind.PLATE):
            raise FairflowError(
                "BROKEN_DESTINATION",
                f"cannot import into a {destination.kind.value}",
            )
        target_paths = [Path(t) for t in targets]
        for t in target_paths:
            if not t.exists():
                raise FairflowError("TARGET_MISSING", f"target file missing: {t}")

        now = utc_now()
        with self.db.tx() as cur:
            cur.execute(
                "INSERT INTO filesets(grp, transfer_mode, image_ids_json, created_at)"
                " VALUES(?,?,?,?)",
                (group, transfer_mode.value, "[]", now),
            )
            fs_id = cur.lastrowid

        fs_dir = self.managed_root / group / str(fs_id)
        fs_dir.mkdir(parents=True, exist_ok=True)
        entries: list[FilesetEntry] = []
        used_names: set[str] = set()
        for t in target_paths:
            link_name = t.name
            n = 1
            while link_name in used_names:
                link_name = f"{t.stem}-{n}{t.suffix}"
                n += 1
            used_names.add(link_name)
            link = fs_dir / link_name
            if transfer_mode is TransferMode.IN_PLACE:
                os.symlink(os.path.abspath(t), link)
            else:
                shutil.copy2(t, link)
            entries.append(FilesetEntry(str(link), str(os.path.abspath(t))))

        image_ids = []
        for name in image_names:
            img = self.create_object(
                ObjectKind.IMAGE, name, owner, group, destination_id, acquired_at
            )
            image_ids.append(img.id)

        with self.db.tx() as cur:
            cur.execute(
                "UPDATE filesets SET image_ids_json = ? WHERE id = ?",
                (json.dumps(image_ids), fs_id),
            )
            for e in entries:
                cur.execute(
                    "INSERT INTO fileset_entries(fileset_id, link_path, target_path)"
                    " VALUES(?,?,?)",
                    (fs_id, e.link_path, e.target_path),
                )
        log.info(
            "fileset %d registered group=%s mode=%s files=%d",
            fs_id, group, transfer_mode.value, len(entries),
        )
        return Fileset(fs_id, group, transfer_mode, tuple(image_ids), tuple(entries), now)

    def get_fileset(self, fileset_id: int) -> Fileset:
        row = self.db.query_one("SELECT * FROM filesets WHERE id = ?", (fileset_id,))
        if row is None:
            raise FairflowError("UNKNOWN_OBJECT", f"no fileset with id {fileset_id}")
        entries = self.db.query(
            "SELECT link_path, target_path FROM fileset_entries WHERE fileset_id = ?"
            " ORDER BY link_path",
            (fileset_id,),
        )
        return Fileset(
            id=row["id"],
            group=row["grp"],
            transfer_mode=TransferMode(row["transfer_mode"]),
            image_ids=tuple(json.loads(row["image_ids_json"])),
            entries=tuple(FilesetEntry(e["link_path"], e["target_path"]) for e in entries),
            created_at=row["created_at"],
        )

    def list_filesets(self) -> list[Fileset]:
        rows = self.db.query("SELECT id FROM filesets ORDER BY id")
        return [self.get_fileset(r["id"]) for r in rows]

    def retarget_fileset_entry(
        self, fileset_id: int, link_path: str | Path, new_target: str | Path
    ) -> FilesetEntry:
        """Point an existing symlink at a new target file atomically.

        Used when preprocessing replaces the original acquisition file: the
        repository keeps the same link identity, only the destination moves.
        """
        link_path = str(link_path)
        new_target = Path(new_target)
        row = self.db.query_one(
            "SELECT * FROM fileset_entries WHERE fileset_id = ? AND link_path = ?",
            (fileset_id, link_path),
        )
        if row is None:
            raise FairflowError("UNKNOWN_LINK", f"fileset {fileset_id} has no link {link_path}")
        if not new_target.exists():
            raise FairflowError("NEW_TARGET_MISSING", f"new target missing: {new_target}")
        abs_target = os.path.abspath(new_target)
        if os.path.islink(link_path) or os.path.exists(link_path):
            os.remove(link_path)
        os.symlink(abs_target, link_path)
        with self.db.tx() as cur:
            cur.execute(
                "UPDATE fileset_entries SET target_path = ? WHERE fileset_id = ? AND link_path = ?",
                (abs_target, fileset_id, link_path),
            )
        return FilesetEntry(link_path, abs_target)

    # -- annotations -----------------------------------------------------------

    def annotate(
        self, object_id: int, namespace: str, pairs: Iterable[tuple[str, str]]
    ) -> KeyValueBlock:
        self.get_object(object_id)
        pair_list = [(str(k), str(v)) for k, v in pairs]
        seen: set[str] = set()
        for k, _ in pair_list:
            if k in seen:
                raise FairflowError(
                    "DUPLICATE_KEY_IN_BLOCK", f"key {k!r} appears twice in one block"
                )
            seen.add(k)
        now = utc_now()
        with self.db.tx() as cur:
            cur.execute(
                "INSERT INTO annotations(object_id, namespace, pairs_json, created_at)"
                " VALUES(?,?,?,?)",
                (object_id, namespace, json.dumps(pair_list), now),
            )
        return KeyValueBlock(namespace, tuple((k, v) for k, v in pair_list), now)

    def get_annotations(self, object_id: int) -> list[KeyValueBlock]:
        self.get_object(object_id)
        rows = self.db.query(
            "SELECT namespace, pairs_json, created_at FROM annotations"
            " WHERE object_id = ? ORDER BY id",
            (object_id,),
        )
        return [
            KeyValueBlock(
                r["namespace"],
                tuple((k, v) for k, v in json.loads(r["pairs_json"])),
                r["created_at"],
            )
            for r in rows
        ]

    # -- search ------------------------------------------------------------------

    def search_by_value(self, query: str, group: str | None = None) -> list[RepoObject]:
        """Objects whose name contains the query or that carry the exact value.

        Key-value matching is exact on the value; name matching is substring,
        case-sensitive. Results are unique, ordered by object id.
        """
        if not query:
            raise FairflowError("EMPTY_QUERY", "search query must be non-empty")
        hits: dict[int, RepoObject] = {}
        name_rows = self.db.query(
            "SELECT * FROM repo_objects WHERE instr(name, ?) > 0 ORDER BY id", (query,)
        )
        for r in name_rows:
            obj = _row_to_object(r)
            if group is None or obj.group == group:
                hits[obj.id] = obj
        anno_rows = self.db.query(
            "SELECT object_id, pairs_json FROM annotations ORDER BY object_id"
        )
        for r in anno_rows:
            if r["object_id"] in hits:
                continue
            if any(v == query for _, v in json.loads(r["pairs_json"])):
                obj = self.get_object(r["object_id"])
                if group is None or obj.group == group:
                    hits[obj.id] = obj
        return [hits[k] for k in sorted(hits)]


def _row_to_object(row) -> RepoObject:
    return RepoObject(
        id=row["id"],
        kind=ObjectKind(row["kind"]),
        name=row["name"],
        owner=row["owner"],
        group=row["grp"],
        parent_id=row["parent_id"],
        created_at=row["created_at"],
        acquired_at=row["acquired_at"],
    )
