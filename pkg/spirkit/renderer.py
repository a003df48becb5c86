"""Render human-readable report tables from templates.
"""

import logging
from typing import Any, Mapping

import jinja2

from spirkit import exceptions, info, utils

logger = logging.getLogger(__name__)


class TemplateRenderError(exceptions.AppError):
    """Jinja template rendering error."""


def format_symbols(values: Any, limit: int = 16) -> str:
    """Show a symbol vector, shortened past limit symbols."""

    values = list(values)
    text = " ".join(str(value) for value in values[:limit])
    if len(values) > limit:
        text += f" ... ({len(values)} symbols)"
    return text


class ReportRenderer:
    """Render report tables using Jinja."""

    def __init__(self, loader: jinja2.BaseLoader | None = None) -> None:
        """Render report tables using Jinja.

        Args:
            loader (jinja2.BaseLoader | None): Template loader, packaged
            templates by default
        """

        # Make access to undefined context variables generate logs.
        undef = jinja2.make_logging_undefined(logger)
        self.env = jinja2.Environment(
            loader=loader or jinja2.PackageLoader(info.APP_NAME, info.TEMPLATE_DIR_NAME),
            trim_blocks=True,
            lstrip_blocks=True,
            undefined=undef,
        )
        self.env.filters.update(
            {
                "rational": utils.format_rational,
                "exact": utils.rational_str,
                "symbols": format_symbols,
            }
        )

    def render(self, name: str, context: Mapping[str, Any]) -> str:
        """Render a report table.

        Args:
            name (str): Template name
            context (Mapping[str, Any]): Render context

        Returns:
            str: Rendered text
        """

        try:
            return self.env.get_template(name).render(context)
        except jinja2.TemplateError as err:
            raise TemplateRenderError(f"Report template error: {err}") from err
