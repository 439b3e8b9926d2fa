import logging

from .base import Plant

log = logging.getLogger(__name__)


class ReplayMissing(LookupError):
    pass


class ReplayPlant(Plant):
    """Answers experiments from previously recorded ones.

    Repeated requests for the same point cycle through the records stored for
    it, in ledger order.
    """

    def __init__(self, records):
        self.records = {}
        for record in records:
            self.records.setdefault(tuple(record.params), []).append(record)
        self.served = {}

    def __repr__(self):
        return f"<ReplayPlant points={len(self.records)}>"

    @classmethod
    def from_ledger(cls, ledger):
        return cls(ledger.records)

    def run(self, params, duration_s, interval_s, ordinal):
        key = tuple(params)
        if key not in self.records:
            raise ReplayMissing(f"no recorded experiment at {params}")
        stored = self.records[key]
        count = self.served.get(key, 0)
        self.served[key] = count + 1
        record = stored[count % len(stored)]
        if abs(record.duration_s - duration_s) > 1e-9:
            log.warning(
                f"replaying a {record.duration_s:g}s experiment at {params} "
                f"for a requested {duration_s:g}s"
            )
        log.debug(f"replaying record {count % len(stored) + 1}/{len(stored)} at {params}")
        return list(record.intervals)
