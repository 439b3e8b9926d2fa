class Plant:
    """Something that can execute a sorting experiment.

    `ordinal` is the experiment's position in the ledger; implementations use
    it to keep repeated experiments distinct yet reproducible.
    """

    def run(self, params, duration_s, interval_s, ordinal):
        """Return the list of IntervalResult measured at `params`."""
        raise NotImplementedError()  # pragma: no cover
