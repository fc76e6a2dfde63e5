"""Lens design from stock catalog elements."""

import json

from ._lensfactory import (
    Api,
    Error,
    ValidationError,
    catalog_summary as _catalog_summary,
    evaluate_system as _evaluate_system,
    lensmaker_focal_length,
    schema_version,
    synthetic_catalog_csv,
)

__all__ = [
    "Api",
    "Client",
    "Error",
    "ValidationError",
    "catalog_summary",
    "evaluate_system",
    "lensmaker_focal_length",
    "schema_version",
    "synthetic_catalog_csv",
]


def catalog_summary(path):
    return json.loads(_catalog_summary(str(path)))


def evaluate_system(system, catalog_path=None, merit=None):
    """Paraxial data and merit report of a system dict at its own sensor gap."""
    return json.loads(
        _evaluate_system(
            json.dumps(system),
            str(catalog_path) if catalog_path else "",
            json.dumps(merit) if merit else "",
        )
    )


class Client:
    """In-process access to the HTTP API; same routes and bodies as the server."""

    def __init__(self, root):
        self._api = Api(str(root))

    def request(self, method, path, query=None, body=None):
        if body is not None and not isinstance(body, str):
            body = json.dumps(body)
        status, content_type, text = self._api.handle(
            method, path, {k: str(v) for k, v in (query or {}).items()}, body or ""
        )
        if content_type == "application/json":
            return status, json.loads(text)
        return status, text

    def get(self, path, **query):
        return self.request("GET", path, query)

    def post(self, path, body=None):
        return self.request("POST", path, body=body)
