"""The append-only experiment ledger and its JSON Lines file.

Every line is one JSON object carrying the ledger `schema` version and a
`kind`: "record", "proposal", "failure" or "status".
"""
import json
import logging
from collections import namedtuple

import semver

from ..plant.metrics import ExperimentRecord
from ..plant.params import ParameterPoint

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0.0"
SUPPORTED_MAJOR = 1


class LedgerError(ValueError):
    pass


class Proposal(namedtuple("Proposal", "step raw actuated combined_ei")):
    __slots__ = ()

    def to_json(self):
        return dict(
            step=self.step,
            raw=list(self.raw),
            actuated=list(self.actuated),
            combined_ei=self.combined_ei,
        )

    @classmethod
    def from_json(cls, data):
        return cls(
            data["step"],
            ParameterPoint.from_sequence(data["raw"]),
            ParameterPoint.from_sequence(data["actuated"]),
            data["combined_ei"],
        )


Failure = namedtuple("Failure", "step params error")


class Ledger:
    """Experiments and proposals of one run, in the order they happened.

    With a `path` every entry is appended to the file as soon as it is made.
    """

    def __init__(self, path=None):
        self.path = path
        self._records = []
        self._proposals = []
        self._failures = []
        self.status = None

    def __repr__(self):
        return f"<Ledger records={len(self._records)} proposals={len(self._proposals)}>"

    def __len__(self):
        return len(self._records)

    @property
    def records(self):
        return tuple(self._records)

    @property
    def proposals(self):
        return tuple(self._proposals)

    @property
    def failures(self):
        return tuple(self._failures)

    @property
    def next_step(self):
        return self._proposals[-1].step + 1 if self._proposals else 1

    @classmethod
    def create(cls, path):
        """Start an empty ledger file at `path`, truncating any existing one."""
        with open(path, "w"):
            pass
        return cls(path)

    def append_record(self, record):
        self._records.append(record)
        self._write("record", record.to_json())

    def append_proposal(self, proposal):
        if self._proposals and proposal.step <= self._proposals[-1].step:
            raise LedgerError(
                f"proposal step {proposal.step} does not follow step {self._proposals[-1].step}"
            )
        self._proposals.append(proposal)
        self._write("proposal", proposal.to_json())

    def append_failure(self, step, params, error):
        failure = Failure(step, params, str(error))
        self._failures.append(failure)
        self._write("failure", dict(step=step, params=list(params), error=failure.error))
        return failure

    def set_status(self, status, best=None):
        self.status = status
        self._write("status", dict(status=status, best=None if best is None else list(best)))

    def _write(self, kind, payload):
        if self.path is None:
            return
        line = json.dumps(dict(schema=SCHEMA_VERSION, kind=kind, **payload))
        with open(self.path, "a") as file:
            file.write(line + "\n")
            file.flush()

    @classmethod
    def load(cls, path):
        """Read a ledger file. The result is detached from the file."""
        ledger = cls()
        try:
            with open(path) as file:
                lines = file.readlines()
        except OSError as e:
            raise LedgerError(f"cannot read ledger {path}: {e}") from None
        for number, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
                check_schema(entry.get("schema"))
                ledger._load_entry(entry)
            except (AttributeError, ValueError, KeyError, TypeError) as e:
                raise LedgerError(f"{path} line {number}: {e}") from None
        log.debug(f"loaded {ledger} from {path}")
        return ledger

    def _load_entry(self, entry):
        kind = entry["kind"]
        if kind == "record":
            self._records.append(ExperimentRecord.from_json(entry))
        elif kind == "proposal":
            self._proposals.append(Proposal.from_json(entry))
        elif kind == "failure":
            params = ParameterPoint.from_sequence(entry["params"])
            self._failures.append(Failure(entry["step"], params, entry["error"]))
        elif kind == "status":
            self.status = entry["status"]
        else:
            raise ValueError(f"unknown ledger entry kind {kind!r}")


def check_schema(version):
    if version is None:
        raise ValueError("entry has no schema version")
    parsed = semver.VersionInfo.parse(version, optional_minor_and_patch=True)
    if parsed.major != SUPPORTED_MAJOR:
        raise ValueError(f"unsupported ledger schema {version}, expected {SUPPORTED_MAJOR}.x")
    return parsed
