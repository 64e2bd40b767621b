"""Conformance harness: replay a recorded request corpus against a running
bridge and check (a) every response validates against the published schema
and (b) greedy self-consistency: every token a /v1/generate call emits
scores strictly_greater_count == 0 when re-scored with its own prefix.

Works against any client exposing `.post(path, json=...)` and
`.get(path)`, so both an in-process test client and a live server over
httpx fit.  Also usable as a CLI:

    python -m simulsa_bridge.conformance --url http://host:port --requests corpus.json
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import jsonschema

SCORE_SCHEMA = {
    "type": "object",
    "required": ["candidate_logprob", "strictly_greater_count", "eos_logprob", "vocab_size"],
    "additionalProperties": False,
    "properties": {
        "candidate_logprob": {"type": "number", "maximum": 0.0},
        "strictly_greater_count": {"type": "integer", "minimum": 0},
        "eos_logprob": {"type": "number", "maximum": 0.0},
        "vocab_size": {"type": "integer", "minimum": 1},
    },
}

GENERATE_SCHEMA = {
    "type": "object",
    "required": ["tokens", "finished"],
    "additionalProperties": False,
    "properties": {
        "tokens": {"type": "array", "items": {"type": "string"}},
        "finished": {"type": "boolean"},
    },
}

HEALTH_SCHEMA = {
    "type": "object",
    "required": ["status", "vocab_size"],
    "properties": {
        "status": {"const": "ok"},
        "vocab_size": {"type": "integer", "minimum": 1},
    },
}

_SCHEMAS = {"/v1/score_next": SCORE_SCHEMA, "/v1/generate": GENERATE_SCHEMA}


@dataclass
class ConformanceReport:
    total: int = 0
    schema_valid: int = 0
    selfcheck_total: int = 0
    selfcheck_passed: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (
            self.total > 0
            and self.schema_valid == self.total
            and self.selfcheck_passed == self.selfcheck_total
            and not self.failures
        )

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "schema_valid": self.schema_valid,
            "selfcheck_total": self.selfcheck_total,
            "selfcheck_passed": self.selfcheck_passed,
            "failures": self.failures,
            "ok": self.ok,
        }


def _validate(payload: dict, schema: dict, label: str, report: ConformanceReport) -> bool:
    try:
        jsonschema.validate(payload, schema)
    except jsonschema.ValidationError as exc:
        report.failures.append(f"{label}: schema violation: {exc.message}")
        return False
    return True


def run_conformance(client, requests: Sequence[dict]) -> ConformanceReport:
    """Replay recorded requests ({"endpoint", "body"} dicts) and check them."""
    report = ConformanceReport()

    health = client.get("/healthz")
    if health.status_code != 200 or not _validate(
        health.json(), HEALTH_SCHEMA, "/healthz", report
    ):
        report.failures.append(f"/healthz: status {health.status_code}")

    for index, item in enumerate(requests):
        endpoint = item["endpoint"]
        body = item["body"]
        label = f"request[{index}] {endpoint}"
        report.total += 1
        response = client.post(endpoint, json=body)
        if response.status_code != 200:
            report.failures.append(f"{label}: status {response.status_code}: {response.text}")
            continue
        payload = response.json()
        if not _validate(payload, _SCHEMAS[endpoint], label, report):
            continue
        report.schema_valid += 1
        if endpoint == "/v1/generate":
            _self_consistency(client, body, payload["tokens"], label, report)
    return report


def _self_consistency(client, body: dict, tokens: list, label: str, report: ConformanceReport) -> None:
    prefix = list(body.get("prefix_tokens", []))
    for token in tokens:
        report.selfcheck_total += 1
        response = client.post(
            "/v1/score_next",
            json={
                "prompt": body["prompt"],
                "audio_b64_wav": body["audio_b64_wav"],
                "prefix_tokens": prefix,
                "candidate_token": token,
            },
        )
        if response.status_code != 200:
            report.failures.append(f"{label}: rescore of {token!r} failed: {response.status_code}")
            prefix.append(token)
            continue
        count = response.json().get("strictly_greater_count")
        if count == 0:
            report.selfcheck_passed += 1
        else:
            report.failures.append(
                f"{label}: greedy token {token!r} has strictly_greater_count={count}"
            )
        prefix.append(token)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Bridge wire-protocol conformance check.")
    parser.add_argument("--url", required=True, help="bridge base URL")
    parser.add_argument("--requests", required=True, help="JSON file: [{endpoint, body}, ...]")
    args = parser.parse_args(argv)

    import httpx

    requests = json.loads(Path(args.requests).read_text(encoding="utf-8"))
    with httpx.Client(base_url=args.url.rstrip("/"), timeout=120.0) as client:
        report = run_conformance(client, requests)
    print(json.dumps(report.as_dict(), indent=2))
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
