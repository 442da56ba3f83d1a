"""Shipped JSON Schemas and validation helpers."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema


class SchemaError(ValueError):
    pass


@lru_cache(maxsize=None)
def _validator(name: str) -> jsonschema.protocols.Validator:
    text = resources.files("guire").joinpath("schemas", f"{name}.json").read_text()
    schema = json.loads(text)
    cls = jsonschema.validators.validator_for(schema)
    cls.check_schema(schema)
    return cls(schema)


def known_schemas() -> list[str]:
    root = resources.files("guire").joinpath("schemas")
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def validate(doc, name: str) -> None:
    """Raise SchemaError describing the first violation of schema ``name``."""
    err = jsonschema.exceptions.best_match(_validator(name).iter_errors(doc))
    if err is not None:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SchemaError(f"{name}: {where}: {err.message}")
