"""Versioned metadata forms: immutable templates, pinned submissions.

Publishing under an existing form id never mutates anything; it appends a
new version. A submission records the exact template version it was
validated against, so later template changes cannot re-interpret old
answers. Accepted values are flattened to ordered key-value pairs and
attached to the target object under ``omero.forms/<form_id>``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import uuid as uuid_mod
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .db import Database, utc_now
from .errors import FairflowError
from .repo import ImageRepository

log = logging.getLogger("fairflow.forms")

SCALAR_TYPES = ("string", "number", "boolean", "enum")
GROUP_TYPE = "group"
FORMS_NAMESPACE_PREFIX = "omero.forms/"


@dataclass(frozen=True)
class FormTemplate:
    form_id: str
    version: int
    schema: dict
    published_by: str
    published_at: str

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(
            json.dumps(self.schema, sort_keys=True).encode("utf-8")
        ).hexdigest()


@dataclass(frozen=True)
class FormSubmission:
    submission_id: str
    form_id: str
    form_version: int
    object_id: int
    values: dict
    submitted_by: str
    submitted_at: str

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(
            json.dumps(self.values, sort_keys=True).encode("utf-8")
        ).hexdigest()


def validate_schema(schema: Mapping) -> None:
    """Reject anything that is not a field-name -> field-spec object."""
    if not isinstance(schema, Mapping) or not schema:
        raise FairflowError("MALFORMED_SCHEMA", "schema must be a non-empty object")
    for name, spec in schema.items():
        if not isinstance(name, str) or not name:
            raise FairflowError("MALFORMED_SCHEMA", "field names must be non-empty strings")
        if not isinstance(spec, Mapping):
            raise FairflowError("MALFORMED_SCHEMA", f"field {name!r} must be an object")
        ftype = spec.get("type")
        if ftype == GROUP_TYPE:
            validate_schema(spec.get("fields"))
            continue
        if ftype not in SCALAR_TYPES:
            raise FairflowError(
                "MALFORMED_SCHEMA", f"field {name!r} has unsupported type {ftype!r}"
            )
        if ftype == "enum":
            options = spec.get("options")
            if not isinstance(options, list) or not options:
                raise FairflowError(
                    "MALFORMED_SCHEMA", f"enum field {name!r} needs non-empty options"
                )


def validate_values(schema: Mapping, values: Mapping, prefix: str = "") -> list[str]:
    """Paths of offending fields; empty means the values conform."""
    offending: list[str] = []
    if not isinstance(values, Mapping):
        return [prefix.rstrip("_") or "<root>"]
    for key in values:
        if key not in schema:
            offending.append(f"{prefix}{key}")
    for name, spec in schema.items():
        path = f"{prefix}{name}"
        if name not in values:
            if spec.get("required"):
                offending.append(path)
            elif spec.get("type") == GROUP_TYPE:
                # an absent group still owes its required descendants
                offending.extend(validate_values(spec["fields"], {}, path + "_"))
            continue
        value = values[name]
        ftype = spec.get("type")
        if ftype == GROUP_TYPE:
            offending.extend(validate_values(spec["fields"], value, path + "_"))
        elif ftype == "string":
            if not isinstance(value, str):
                offending.append(path)
        elif ftype == "number":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                offending.append(path)
        elif ftype == "boolean":
            if not isinstance(value, bool):
                offending.append(path)
        elif ftype == "enum":
            if value not in spec.get("options", []):
                offending.append(path)
    return offending


def stringify(value) -> str:
    if isinstance(value, bool):
        return "True" if value else "False"
    return str(value)


def flatten(schema: Mapping, values: Mapping, prefix: str = "") -> list[tuple[str, str]]:
    """Ordered key-value pairs; nesting joins path segments with underscores.

    Pair order follows schema field order, depth-first, so two submissions
    against the same template always flatten in the same sequence.
    """
    out: list[tuple[str, str]] = []
    for name, spec in schema.items():
        if name not in values:
            continue
        key = f"{prefix}{name}"
        if spec.get("type") == GROUP_TYPE:
            out.extend(flatten(spec["fields"], values[name], key + "_"))
        else:
            out.append((key, stringify(values[name])))
    return out


_SCHEMA = """
CREATE TABLE IF NOT EXISTS form_templates (
    form_id TEXT NOT NULL,
    version INTEGER NOT NULL,
    schema_json TEXT NOT NULL,
    published_by TEXT NOT NULL,
    published_at TEXT NOT NULL,
    PRIMARY KEY(form_id, version)
);
CREATE TABLE IF NOT EXISTS form_submissions (
    submission_id TEXT PRIMARY KEY,
    form_id TEXT NOT NULL,
    form_version INTEGER NOT NULL,
    object_id INTEGER NOT NULL,
    values_json TEXT NOT NULL,
    submitted_by TEXT NOT NULL,
    submitted_at TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_submissions_object ON form_submissions(object_id, submitted_at);
"""


class FormsRegistry:
    def __init__(self, db: Database, repo: ImageRepository):
        self.db = db
        self.repo = repo
        db.executescript(_SCHEMA)

    def publish_template(
        self, form_id: str, schema: Mapping, publisher: str, is_admin: bool = True
    ) -> FormTemplate:
        if not is_admin:
            raise FairflowError("NOT_ADMIN", "publishing templates requires admin rights")
        if not form_id:
            raise FairflowError("MALFORMED_SCHEMA", "form_id must be non-empty")
        validate_schema(schema)
        now = utc_now()
        with self.db.tx() as cur:
            row = cur.execute(
                "SELECT MAX(version) AS v FROM form_templates WHERE form_id = ?", (form_id,)
            ).fetchone()
            version = (row["v"] or 0) + 1
            cur.execute(
                "INSERT INTO form_templates(form_id, version, schema_json, published_by,"
                " published_at) VALUES(?,?,?,?,?)",
                (form_id, version, json.dumps(schema), publisher, now),
            )
        log.info("template %s v%d published by %s", form_id, version, publisher)
        return FormTemplate(form_id, version, dict(schema), publisher, now)

    def get_template(self, form_id: str, version: int) -> FormTemplate:
        row = self.db.query_one(
            "SELECT * FROM form_templates WHERE form_id = ? AND version = ?",
            (form_id, version),
        )
        if row is None:
            raise FairflowError("UNKNOWN_TEMPLATE", f"no template {form_id!r} v{version}")
        return _row_to_template(row)

    def latest_template(self, form_id: str) -> FormTemplate:
        row = self.db.query_one(
            "SELECT * FROM form_templates WHERE form_id = ? ORDER BY version DESC LIMIT 1",
            (form_id,),
        )
        if row is None:
            raise FairflowError("UNKNOWN_TEMPLATE", f"no template {form_id!r}")
        return _row_to_template(row)

    def list_templates(self, form_id: str | None = None) -> list[FormTemplate]:
        if form_id is None:
            rows = self.db.query("SELECT * FROM form_templates ORDER BY form_id, version")
        else:
            rows = self.db.query(
                "SELECT * FROM form_templates WHERE form_id = ? ORDER BY version", (form_id,)
            )
        return [_row_to_template(r) for r in rows]

    def submit(
        self,
        form_id: str,
        object_id: int,
        values: Mapping,
        user: str,
        form_version: int | None = None,
    ) -> FormSubmission:
        """Validate values against the pinned version and annotate the object."""
        template = (
            self.latest_template(form_id)
            if form_version is None
            else self.get_template(form_id, form_version)
        )
        self.repo.get_object(object_id)
        offending = validate_values(template.schema, values)
        if offending:
            raise FairflowError(
                "VALIDATION_FAILED", "invalid fields: " + ", ".join(sorted(offending))
            )
        now = utc_now()
        submission = FormSubmission(
            submission_id=str(uuid_mod.uuid4()),
            form_id=form_id,
            form_version=template.version,
            object_id=object_id,
            values=dict(values),
            submitted_by=user,
            submitted_at=now,
        )
        with self.db.tx() as cur:
            cur.execute(
                "INSERT INTO form_submissions(submission_id, form_id, form_version,"
                " object_id, values_json, submitted_by, submitted_at) VALUES(?,?,?,?,?,?,?)",
                (
                    submission.submission_id,
                    form_id,
                    template.version,
                    object_id,
                    json.dumps(dict(values)),
                    user,
                    now,
                ),
            )
        self.repo.annotate(
            object_id,
            FORMS_NAMESPACE_PREFIX + form_id,
            self.flatten_to_kv(submission),
        )
        return submission

    def flatten_to_kv(self, submission: FormSubmission) -> list[tuple[str, str]]:
        template = self.get_template(submission.form_id, submission.form_version)
        return flatten(template.schema, submission.values)

    def history(self, object_id: int, form_id: str | None = None) -> list[FormSubmission]:
        """Submissions for an object, oldest first, each pinned to its version."""
        if form_id is None:
            rows = self.db.query(
                "SELECT * FROM form_submissions WHERE object_id = ?"
                " ORDER BY submitted_at, submission_id",
                (object_id,),
            )
        else:
            rows = self.db.query(
                "SELECT * FROM form_submissions WHERE object_id = ? AND form_id = ?"
                " ORDER BY submitted_at, submission_id",
                (object_id, form_id),
            )
        return [_row_to_submission(r) for r in rows]

    def export_templates(self, out_path: str | Path) -> int:
        """All template versions as one JSON document, stable field order."""
        templates = self.list_templates()
        doc = [
            {
                "form_id": t.form_id,
                "version": t.version,
                "schema": t.schema,
                "published_by": t.published_by,
                "published_at": t.published_at,
            }
            for t in templates
        ]
        Path(out_path).write_text(json.dumps(doc, indent=2), encoding="utf-8")
        return len(doc)

    def import_templates(self, in_path: str | Path) -> int:
        """Load exported templates verbatim, keeping versions and timestamps."""
        doc = json.loads(Path(in_path).read_text(encoding="utf-8"))
        count = 0
        with self.db.tx() as cur:
            for item in doc:
                validate_schema(item["schema"])
                cur.execute(
                    "INSERT OR IGNORE INTO form_templates(form_id, version, schema_json,"
                    " published_by, published_at) VALUES(?,?,?,?,?)",
                    (
                        item["form_id"],
                        item["version"],
                        json.dumps(item["schema"]),
                        item["published_by"],
                        item["published_at"],
                    ),
                )
                count += cur.rowcount
        return count


def _row_to_template(row) -> FormTemplate:
    return FormTemplate(
        form_id=row["form_id"],
        version=row["version"],
        schema=json.loads(row["schema_json"]),
        published_by=row["published_by"],
        published_at=row["published_at"],
    )


def _row_to_submission(row) -> FormSubmission:
    return FormSubmission(
        submission_id=row["submission_id"],
        form_id=row["form_id"],
        form_version=row["form_version"],
        object_id=row["object_id"],
        values=json.loads(row["values_json"]),
        submitted_by=row["submitted_by"],
        submitted_at=row["submitted_at"],
    )
