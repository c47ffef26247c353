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


class FacetransError(Exception):
    """
    Base class for every error raised deliberately by facetrans-lib
    """


class InvalidArgumentError(FacetransError, ValueError):
    """
    Raised when an operation receives an argument outside its contract e.g. a label index >= K, mismatched shapes
    """


class ConfigurationError(InvalidArgumentError):
    """
    Raised when a component requiring a configuration doesn't receive a usable value for it
    """

    def __init__(self, key: str, message: str = "A required configuration value is missing or invalid"):
        """
        :param key: configuration key at fault
        :param message: explanation of the error
        """
        self.key = key
        self.message = message
        super().__init__(f"{message} ({key})")


class DatasetFormatError(FacetransError):
    """
    Raised when a dataset directory, landmark file or metric log cannot be parsed
    """

    def __init__(self, path, message: str = "Malformed or missing file"):
        """
        :param path: the offending file
        :param message: explanation of the error
        """
        self.path = str(path)
        self.message = message
        super().__init__(f"{message}: {self.path}")


class DegenerateLandmarksError(InvalidArgumentError):
    """
    Raised when landmarks cannot span a face region: fewer than three points, or all points collinear
    """


class CheckpointError(FacetransError):
    """
    Raised when a checkpoint archive is missing or is not a facetrans checkpoint
    """

    def __init__(self, path, message: str = "Cannot read checkpoint"):
        self.path = str(path)
        self.message = message
        super().__init__(f"{message}: {self.path}")


class EmptyCurveError(InvalidArgumentError):
    """
    Raised when a plot is requested from a log or score file holding no data points
    """


class NumericalInstabilityError(FacetransError, ArithmeticError):
    """
    Raised when a loss term, gradient or parameter becomes NaN or infinite
    """

    def __init__(self, term: str, value: float | None = None, checkpoint_path: str | None = None):
        """
        :param term: name of the offending loss term or parameter block
        :param value: the non-finite value, where one is available
        :param checkpoint_path: the last good checkpoint written before the failure
        """
        self.term = term
        self.value = value
        self.checkpoint_path = checkpoint_path
        super().__init__(self.__describe__())

    def __describe__(self) -> str:
        message = f"Non-finite value in {self.term}"
        if self.value is not None:
            message += f" ({self.value})"
        if self.checkpoint_path is not None:
            message += f"; last good checkpoint is {self.checkpoint_path}"
        return message

    def with_checkpoint(self, checkpoint_path: str | None) -> 'NumericalInstabilityError':
        self.checkpoint_path = checkpoint_path
        self.args = (self.__describe__(),)
        return self
