import logging
import sys
from enum import Enum
from typing import Any, Callable

from facetrans_lib.config.configSource import ConfigSource, EnvironmentSource
from facetrans_lib.exceptions import ConfigurationError

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


class OnError(Enum):
    """
    Possible on error behaviours.

    There is `RAISE_EXCEPTION` to raise a `ConfigurationError` and `EXIT` to exit the program.
    """

    RAISE_EXCEPTION = 1
    EXIT = 2


def string_to_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    if str(value).lower() in ('true', '1', 'yes'):
        return True
    elif str(value).lower() in ('false', '0', 'no'):
        return False
    else:
        raise ValueError("raw value must be 'true' or 'false'")


def to_int_tuple(value: Any) -> tuple[int, ...]:
    """
    Converts "2,2", [2, 2] or (2, 2) into a tuple of ints
    """
    if isinstance(value, str):
        value = [v for v in value.split(',') if v.strip()]
    return tuple(int(v) for v in value)


def to_name_list(value: Any) -> list[str]:
    """
    Converts "neutral,happy" or a list of names into a list of stripped names
    """
    if isinstance(value, str):
        value = value.split(',')
    return [str(v).strip() for v in value if str(v).strip()]


class Configurator:
    """
    A configurator is a helper for reading in configuration backed by an arbitrary configuration source.

    See the `get()` method for the main utility.  Every value read is remembered, so `resolved()` gives back the fully
    materialised configuration of a run, defaults included.
    """

    def __init__(self, config_source: ConfigSource = None, exit_code: int = 2, debug: bool = False):
        """
        Creates a new configurator backed by the provided configuration source.

        :param config_source: Configuration Source from where raw configuration values may be read
        :param exit_code: Exit Code to use when retrieving configuration with an `on_error` behaviour of `EXIT`
        :param debug: Debugs configuration retrieval
        """
        if config_source is None:
            config_source = EnvironmentSource()
        if not isinstance(config_source, ConfigSource):
            raise TypeError('Not provided with a valid ConfigSource')

        self.exit_code = exit_code
        self.debug = debug
        self.source = config_source
        self.__resolved: dict[str, Any] = {}
        if self.debug:
            logger.debug(f"Configuration Source is {str(self.source)}")

    def get(self, config_key: str, default: Any = None, required: bool = False, description: str = None,
            converter: Callable[[Any], Any] = None, required_type: type | tuple[type, ...] = None,
            choices: tuple | list | None = None, on_error: OnError = OnError.RAISE_EXCEPTION) -> Any:
        """
        Gets the value for a given configuration key or produces an error.

        This function can optionally convert the value into a typed value and/or enforce a required type on the
        value.

        :param config_key: Configuration Key
        :param required:
            Whether this configuration is considered as Required.  If required configuration is not present, and no
            `default` parameter is provided an error is produced.
        :param description:
            Description for the configuration that may be included in some error messages.
        :param converter:
            Converter function to convert the raw value provided by the Configuration Source into a typed value.  The
            converter is not applied to a `None` value.  If the converter raises an exception then an error is
            produced.
        :param required_type:
            If specified requires that the configuration value after application of the `converter` function is an
            instance of the given type otherwise an error is produced.
        :param choices: If specified the converted value must be one of these
        :param default:
            Default value, used if the configuration key's value, as provided by the Configuration Source, is `None`.
        :param on_error:
            Controls behaviour when an error is detected e.g. a required configuration key has no value and no suitable
            default value.
        :return: Configuration value
        :raises ConfigurationError:
            Raised if a suitable configuration value is not provided and `on_error` was `OnError.RAISE_EXCEPTION`
        """
        value: Any = None
        raw_value = self.source.get(config_key)
        if self.debug:
            logger.debug(f"Raw Value for Configuration Key {config_key} is {raw_value}")

        if raw_value is None:
            raw_value = default
            if self.debug and default is not None:
                logger.debug(f"Using default value {default}")
            if raw_value is None and required:
                self.__handle_errors__(config_key, f"Required Configuration Key {config_key} is not set.  "
                                                   f"{description or ''}".strip(), on_error)

        if converter is not None and raw_value is not None:
            try:
                value = converter(raw_value)
                if self.debug:
                    logger.debug(f"Converted raw value {raw_value} into typed value {value} with type {type(value)}")
            except Exception as e:
                self.__handle_errors__(
                    config_key,
                    f"Configuration Key {config_key} has raw value {raw_value} that failed value conversion: {e}",
                    on_error)
        else:
            value = raw_value

        if required_type is not None and value is not None:
            if not isinstance(value, required_type):
                self.__handle_errors__(
                    config_key,
                    f"Configuration Key {config_key} has typed value {value} of type {type(value)} "
                    f"which is not of the desired type {required_type}",
                    on_error)

        if choices is not None and value is not None and value not in choices:
            self.__handle_errors__(
                config_key, f"Configuration Key {config_key} must be one of {', '.join(map(str, choices))}, "
                            f"got {value}", on_error)

        self.__resolved[config_key] = value
        return value

    def resolved(self) -> dict[str, Any]:
        """
        Gets every configuration key read so far with its materialised value, in reading order
        """
        return dict(self.__resolved)

    def __handle_errors__(self, config_key: str, message: str, on_error: OnError):
        """
        Handles configuration errors

        :param config_key: Configuration key at fault
        :param message: Error message
        :param on_error: On Error behaviour
        """
        if on_error is OnError.EXIT:
            logger.critical(message)
            sys.exit(self.exit_code)
        else:
            raise ConfigurationError(config_key, message)
