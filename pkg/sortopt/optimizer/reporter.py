import logging

from colorama import Fore, Style

log = logging.getLogger(__name__)

CONVERGED = "converged"
EI_FLOOR = "ei_floor"
BUDGET_EXHAUSTED = "budget_exhausted"

STATUS_COLOURS = {CONVERGED: Fore.GREEN, EI_FLOOR: Fore.GREEN, BUDGET_EXHAUSTED: Fore.YELLOW}


class Reporter:
    def start(self, cfg):
        pass

    def record(self, record):
        pass

    def proposal(self, proposal):
        pass

    def end(self, result):
        pass

    def warn(self, message):
        raise NotImplementedError()

    def fail(self, message):
        raise NotImplementedError()  # pragma: no cover


class LoggedReporter(Reporter):
    def start(self, cfg):
        log.info(
            f"Optimizing from {len(cfg.initial_design)} initial experiments with weights "
            f"{cfg.weights} and lambda {cfg.noise_weight:g}"
        )

    def record(self, record):
        log.info(
            f"Measured {record.params}: TP_n={record.tp_n_mean:.4f} TN_n={record.tn_n_mean:.4f}"
        )

    def proposal(self, proposal):
        log.info(
            f"Step {proposal.step}: proposing {_format_raw(proposal.raw)}, "
            f"actuating {proposal.actuated} (EI {proposal.combined_ei:.3g})"
        )

    def end(self, result):
        log.info(
            f"Finished with status {result.status} after {result.steps} steps, best {result.best}"
        )

    def warn(self, message):
        log.warning(" " + message)

    def fail(self, message):
        log.error(" " + message)


class ConsoleReporter(Reporter):
    """Prints each proposal as a table row: step, T_R, E_T, S_E."""

    def __init__(self):
        self.header_printed = False

    def start(self, cfg):
        count = len(cfg.initial_design)
        print(f"{Style.BRIGHT}Initial design: {count} experiments, weights {cfg.weights}")
        self.header_printed = False

    def proposal(self, proposal):
        if not self.header_printed:
            print(f"{'step':>4} {'T_R':>8} {'E_T':>8} {'S_E':>8}   actuated       combined EI")
            self.header_printed = True
        tr, et, se = proposal.raw
        actuated = str(proposal.actuated)
        print(
            f"{proposal.step:>4} {tr:>8.2f} {et:>8.2f} {se:>8.2f}   {actuated:<14} "
            f"{proposal.combined_ei:.4g}"
        )

    def end(self, result):
        colour = STATUS_COLOURS.get(result.status, Fore.RED)
        print(colour + f"Status: {result.status} after {result.steps} steps")
        if result.best is not None:
            print(f"Best: {result.best}")

    def warn(self, message):
        print(Fore.YELLOW + message)

    def fail(self, message):
        print(Fore.RED + "FAILED " + message)


def _format_raw(point):
    return "[" + ", ".join(f"{v:.2f}" for v in point) + "]"
