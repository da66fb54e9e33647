from argparse import ArgumentTypeError
from typing import List

"""
Converters are passed as argparse `type=` callables, so they signal bad input with
ArgumentTypeError which argparse turns into a usage error.

"""


def positive_integer(integer) -> int:
    """
    :param integer: type that can be casted to int
    :return: int(integer) if param integer is larger than 0
    :raise: ArgumentTypeError if integer is < 1 or can't be converted to int

    """
    try:
        integer = int(integer)
    except ValueError:
        raise ArgumentTypeError(f"'{integer}' is not an integer.")
    if integer < 1:
        raise ArgumentTypeError("Passed argument has to be a integer larger than zero.")
    return integer


def non_negative_integer(integer) -> int:
    try:
        integer = int(integer)
    except ValueError:
        raise ArgumentTypeError(f"'{integer}' is not an integer.")
    if integer < 0:
        raise ArgumentTypeError("Passed argument can't be negative.")
    return integer


def ratio(value) -> float:
    """
    :param value: type that can be casted to float
    :return: float(value) if it lies in [0, 1)
    """
    try:
        value = float(value)
    except ValueError:
        raise ArgumentTypeError(f"'{value}' is not a number.")
    if not 0.0 <= value < 1.0:
        raise ArgumentTypeError(f"Ratio has to be in [0, 1), got {value}.")
    return value


def value_list(str_input: str) -> List[float]:
    """
    :param str_input: comma separated numbers, example: 0.0,0.1,0.2 or 16,32,64
    :return: list of floats in the given order
    :raise: ArgumentTypeError on an empty list or a non-numeric element
    """
    parts = [part.strip() for part in str_input.split(",") if part.strip()]
    if not parts:
        raise ArgumentTypeError("Value list can't be empty.")
    try:
        return [float(part) for part in parts]
    except ValueError:
        raise ArgumentTypeError(f"Invalid value list '{str_input}', expected comma separated numbers.")


def seed_list(str_input: str) -> List[int]:
    values = value_list(str_input)
    if any(value != int(value) or value < 0 for value in values):
        raise ArgumentTypeError(f"Seeds have to be non-negative integers, got '{str_input}'.")
    return [int(value) for value in values]
