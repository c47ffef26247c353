from __future__ import annotations

import logging
import sys
import time
from typing import Iterable

from colored import colored, fore, style
from opentelemetry import metrics, trace
from opentelemetry.metrics import CallbackOptions, MeterProvider, Observation

from facetrans_lib.errors import ErrorHandler, PrintErrorHandler, auto_discover_error_handler
from facetrans_lib.reporter import ManifestReporter
from facetrans_lib.status import Status

__license__ = """
Copyright (c) The facetrans-lib Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""


logger = logging.getLogger(__name__)


def __calculate_elapsed__(start: float | None) -> float | None:
    """
    Calculates the elapsed time

    :param start: Start time
    :return: Elapsed time
    """
    if start is None:
        return None
    return time.perf_counter() - start


def __calculate_rate__(count: int, elapsed: float | None) -> float:
    """
    Calculates the processing rate

    :param count: Count of units processed
    :param elapsed: Elapsed time
    :return: Processing rate expressed as units/second
    """
    if elapsed is not None and elapsed > 0:
        return count / elapsed
    else:
        return count


DEFAULT_REPORTING_INTERVAL: int = 100
"""The default number of units between progress lines"""


class Action:
    """
    A long running step of the pipeline, e.g. training iterations or translated images

    Prints a startup banner and periodic progress lines, counts processed units and errors through OpenTelemetry, and
    forwards the final outcome to a `ManifestReporter` when one is attached.
    """

    def __init__(
            self, action: str, name: str | None = None, unit: str = "items", text_colour: str | None = fore.LIGHT_CYAN,
            reporting_interval: int = DEFAULT_REPORTING_INTERVAL, reporter: ManifestReporter | None = None,
            has_error_handler: bool = True, error_handler: ErrorHandler | None = None, disable_metrics: bool = False,
            quiet: bool = False, meter_provider: MeterProvider | None = None
         ):
        """
        Creates a new instance of an Action

        :param action: The kind of action, shown in the startup banner and used to name metrics
        :param name: A more specific description of what this run does
        :param unit: What one processed unit is, used in progress lines
        :param text_colour:
            ANSI control code for the console text, `colored` provides constants in its `fore` and `style` packages.
            Colourisation is disabled when stdout is not a TTY unless the environment explicitly enables it.
        :param reporting_interval: Number of processed units between progress lines, 0 disables periodic lines
        :param reporter: Manifest reporter told about the run's status
        :param has_error_handler: Whether errors are recorded by an error handler
        :param error_handler: Explicit error handler, auto discovered when not given
        :param disable_metrics: Whether to skip creating OpenTelemetry instruments
        :param quiet: Suppresses all console output
        :param meter_provider: Meter provider for the instruments, the global provider when not given
        """
        if not action:
            raise ValueError("An action kind is required")
        self.action_type = action
        self.name = name
        self.unit = unit
        self.quiet = quiet
        self.text_colour = text_colour
        self.colors_enabled = self.text_colour is not None and (sys.stdout.isatty() or colored(fore.RED).enabled())
        if not self.colors_enabled:
            logger.debug("Not a TTY (or no colour provided), colourised output disabled")
        self.reporting_interval = reporting_interval
        self.reporter = reporter
        self.startup_banner_displayed = False
        self.batch_timer: float | None = None
        self.total_timer: float | None = None
        self.counter: int = 0
        self.expected: int = 0
        self.error_count: int = 0
        self.last_report_at: int = 0

        self.include_error_handler = has_error_handler
        if self.include_error_handler and error_handler is None:
            error_handler_class = auto_discover_error_handler()
            try:
                self.error_handler: ErrorHandler | None = error_handler_class(self.generate_id())
            except ValueError:
                logger.warning("Error Handler defaulting to print")
                self.error_handler = PrintErrorHandler(self.generate_id())
        elif self.include_error_handler:
            self.error_handler = error_handler
        else:
            self.error_handler = None

        self.tracer = trace.get_tracer(__name__)
        self.metrics_enabled = not disable_metrics
        self.processed_metric_timer: float | None = None
        self.processed_metric_counter: int = 0
        if self.metrics_enabled:
            self.meter = metrics.get_meter(self.telemetry_id, meter_provider=meter_provider)
            self.meter.create_observable_gauge(
                name=f"{self.action_type}.items.processed_rate",
                description="The number of units the action processes per second",
                callbacks=[self.__get_items_processed_rate__],
            )
            self.records_error_counter = self.meter.create_counter(
                f"{self.action_type}.items.error_total",
                description="The number of errors encountered by the action",
            )
            self.records_processed_counter = self.meter.create_counter(
                f"{self.action_type}.items.processed",
                description="The count of units processed",
            )

    @property
    def telemetry_id(self) -> str:
        return f"facetrans_lib.{self.action_type}.{self.generate_id()}"

    def generate_id(self) -> str:
        if self.name is not None:
            return self.name.replace(' ', "-")
        return self.action_type

    def __get_items_processed_rate__(self, options: CallbackOptions) -> Iterable[Observation]:
        total_elapsed = __calculate_elapsed__(self.processed_metric_timer)
        observation = Observation(
            __calculate_rate__(self.processed_metric_counter, total_elapsed), {"item.type": self.unit}
        )
        self.processed_metric_timer = time.perf_counter()
        self.processed_metric_counter = 0
        return [observation]

    def display_startup_banner(self) -> None:
        """Displays a startup banner for the action

        Subsequent calls produce no output.
        """
        if self.startup_banner_displayed:
            return
        self.startup_banner_displayed = True

        horizontal_line = "".ljust(80, '-')
        empty_line = "|".ljust(79) + "|"

        self.print_coloured(horizontal_line)
        self.print_coloured(empty_line)
        self.print_coloured("|" + "FACETRANS".center(78) + "|")
        self.print_coloured("|" + self.action_type.center(78) + "|")
        if self.name is not None and len(self.name) > 0:
            self.print_coloured("|" + self.name.center(78) + "|")
        self.print_coloured(empty_line)
        self.print_coloured(horizontal_line, True)

    def print_coloured(self, line: str, flush=False, end='\n') -> None:
        """
        Prints a line of text in the colour configured for this action, or as-is when colourisation is disabled
        """
        if self.quiet:
            return
        if self.colors_enabled:
            print(self.text_colour + line + style.RESET, end=end, flush=flush)
        else:
            print(line, end=end, flush=flush)

    def update_status(self, status: Status) -> None:
        if self.reporter is not None:
            self.reporter.set_status(status)

    def started(self) -> None:
        """
        Tells the action that it has been started
        """
        if self.total_timer is not None:
            raise RuntimeError('Action has already been started')
        self.display_startup_banner()
        self.total_timer = time.perf_counter()
        self.batch_timer = self.total_timer
        self.processed_metric_timer = self.total_timer
        self.counter = 0
        self.last_report_at = 0
        self.update_status(Status.RUNNING)
        self.print_coloured("Started work...")

    def expect(self, expected: int) -> None:
        """
        Sets the total number of units this action should process, progress lines then include a percentage
        """
        self.expected = expected
        if self.expected > 0:
            self.print_coloured(f"Expecting to process {self.expected:,} {self.unit}")

    def record_processed(self, count: int = 1) -> None:
        """
        Tells the action that units have been processed, reporting progress at every interval boundary crossed
        """
        with self.tracer.start_as_current_span('acknowledge processed') as tracer_span:
            if self.metrics_enabled:
                self.records_processed_counter.add(count)
            self.counter += count
            self.processed_metric_counter += count
            tracer_span.set_attribute("action.counter", self.counter)
            if self.reporting_interval > 0 and \
                    self.counter // self.reporting_interval > self.last_report_at // self.reporting_interval:
                self.report_progress()

    def report_progress(self) -> str | None:
        """
        Reports the current progress by printing it out

        :return: The progress line, or None when nothing was processed since the last report
        """
        if self.last_report_at == self.counter:
            return None

        last = self.counter - self.last_report_at
        self.last_report_at = self.counter

        batch_elapsed = __calculate_elapsed__(self.batch_timer) or 0.0
        total_elapsed = __calculate_elapsed__(self.total_timer)
        batch_rate = __calculate_rate__(last, batch_elapsed)
        total_rate = __calculate_rate__(self.counter, total_elapsed)
        line = ""
        if self.expected > 0:
            percentage = (self.counter / self.expected) * 100
            line += f"[{percentage:.2f}%] "
        line += f"{self.counter:,} {self.unit} processed.  Last {last:,} took {batch_elapsed:,.2f} seconds. "
        line += f"Batch rate was {batch_rate:,.2f} {self.unit}/second. "
        line += f"Overall rate is {total_rate:,.2f} {self.unit}/second."
        self.print_coloured(line)
        logger.debug(line)
        self.batch_timer = time.perf_counter()
        return line

    def aborted(self, status: Status = Status.ERRORING, error: BaseException | None = None) -> None:
        """
        Tells the action that it has been aborted, e.g. by an exception or an interrupt
        """
        self.report_progress()
        elapsed = __calculate_elapsed__(self.total_timer) or 0.0
        rate = __calculate_rate__(self.counter, elapsed)
        self.print_coloured(
            f"Aborted!  Processed {self.counter:,} {self.unit} in {elapsed:,.2f} seconds at {rate:,.2f} "
            f"{self.unit}/second")
        if self.reporter is not None:
            self.reporter.finish(status, error)
        if self.error_handler is not None:
            self.error_handler.close()

    def finished(self) -> None:
        """
        Tells the action that it has finished
        """
        if self.total_timer is None:
            raise RuntimeError('Action has not been started')

        self.report_progress()
        if self.expected > 0 and self.counter != self.expected:
            self.print_coloured(
                f"Expected number of {self.unit} was incorrect, expected {self.expected:,} but processed "
                f"{self.counter:,}")

        elapsed = __calculate_elapsed__(self.total_timer) or 0.0
        rate = __calculate_rate__(self.counter, elapsed)
        self.print_coloured(
            f"Finished Work, processed {self.counter:,} {self.unit} in {elapsed:,.2f} "
            f"seconds at {rate:,.2f} {self.unit}/second and "
            f"encountered {self.error_count:,} error{'s' if self.error_count != 1 else ''}.")

        self.__reset_counters__()
        if self.reporter is not None:
            self.reporter.finish(Status.COMPLETED)
        if self.error_handler is not None:
            self.error_handler.close()

    def send_error(self, error: str, error_type: str, level) -> None:
        self.error_count += 1
        if self.metrics_enabled:
            self.records_error_counter.add(1)
        if self.error_handler is not None:
            self.error_handler.send_error(error, error_type, level, self.counter)

    def send_exception(self, e: BaseException) -> None:
        self.error_count += 1
        if self.metrics_enabled:
            self.records_error_counter.add(1)
        if self.error_handler is not None:
            self.error_handler.send_exception(e, counter=self.counter)

    def __reset_counters__(self) -> None:
        """
        Resets the internal progress counters and timers
        """
        self.expected = 0
        self.counter = 0
        self.error_count = 0
        self.last_report_at = 0
        self.total_timer = None
        self.batch_timer = None
