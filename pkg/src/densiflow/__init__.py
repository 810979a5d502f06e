"""densiflow: a desk-scale numerical laboratory for 2D variable-density
incompressible flow without vacuum.

Layers, bottom to top: `fields` (periodic spectral calculus), `analytic`
(closed forms for the logarithmic averaging kernel), `transport`
(characteristics, flow maps, advection), `solver` (the time stepper),
`functionals` (weighted regularity diagnostics), `stability_lab`
(two-trajectory experiments), `cli_io` (config/reports/CLI).
"""

__version__ = "0.1.0"

from . import (
    analytic,
    cli_io,
    errors,
    fields,
    functionals,
    report,
    solver,
    stability_lab,
    transport,
)

__all__ = [
    "analytic",
    "errors",
    "fields",
    "report",
    "transport",
    "solver",
    "functionals",
    "stability_lab",
    "cli_io",
    "__version__",
]
