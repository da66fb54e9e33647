from typing import Iterable, Sequence

from texttable import Texttable


def _format(value) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def render(header: Sequence[str], rows: Iterable[Sequence], title: str = None) -> str:
    """
    Aligned-text table for reports.
    :param header: column names
    :param rows: row values, floats are shown with 4 decimals
    :param title: optional line printed above the table
    :return: str table
    """
    table = Texttable(max_width=0)
    table.set_deco(Texttable.HEADER | Texttable.VLINES | Texttable.BORDER)
    table.set_cols_dtype(["t"] * len(header))
    table.header(list(header))
    table.set_cols_align(["l"] + ["r"] * (len(header) - 1))
    for row in rows:
        table.add_row([_format(value) for value in row])
    drawn = table.draw()
    return f"{title}\n{drawn}" if title else drawn
