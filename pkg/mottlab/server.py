#!/usr/bin/env python3
"""
mottlab MCP Server

Exposes the decay-physics helpers, the cloud chamber model and fit, and the
Geiger window models as MCP tools over stdio. Data files named in tool
arguments are read asynchronously; numerical work runs in a worker thread.
"""

import asyncio
import json
import logging
import sys
from dataclasses import asdict
from typing import Any, Dict, List

import aiofiles
import numpy as np

try:
    import mcp.types as types
    from mcp.server import NotificationOptions, Server
    from mcp.server.models import InitializationOptions
    import mcp.server.stdio
except ImportError as e:
    print(f"Failed to import MCP modules: {e}", file=sys.stderr)
    print("Please install the MCP package: pip install mcp", file=sys.stderr)
    sys.exit(1)

from . import __version__
from .chamber import model_cdf
from .config import fit_from_config, geiger_from_config, geometry_from_config
from .empirics import empirical_cdf, ingest_tracks
from .errors import DataError, MottlabError
from .fitting import fit_parameters
from .gamow import (
    ClusterModel,
    FluxMode,
    GamowParams,
    collimation_cone,
    critical_radius,
    flux_magnitude,
    total_square_norm,
)
from .geiger import ModelKind, fit_stopping_equiv, normalized_curves, read_count_data

logger = logging.getLogger("mottlab-server")

server = Server("mottlab")

_NUMBER = {"type": "number"}
_CHAMBER = {
    "type": "object",
    "description": "Chamber section as in the JSON run configuration",
}
_GEIGER = {
    "type": "object",
    "description": "Geiger section as in the JSON run configuration",
}


@server.list_tools()
async def handle_list_tools() -> list[types.Tool]:
    """List the available mottlab tools."""
    return [
        types.Tool(
            name="gamow_square_norm",
            description="Total square-norm of the decay wavefunction at time t (s)",
            inputSchema={
                "type": "object",
                "properties": {
                    "gamma": _NUMBER,
                    "v": {"type": "number", "description": "alpha speed (mm/s)"},
                    "k": {"type": "number", "description": "wavenumber (1/mm)"},
                    "t": _NUMBER,
                    "r_max": {"type": "number", "description": "optional radius (mm)"},
                },
                "required": ["gamma", "v", "k", "t"],
            },
        ),
        types.Tool(
            name="gamow_flux",
            description="Outward square-norm flux at radius r (mm) and time t (s)",
            inputSchema={
                "type": "object",
                "properties": {
                    "gamma": _NUMBER,
                    "v": _NUMBER,
                    "k": _NUMBER,
                    "r": _NUMBER,
                    "t": _NUMBER,
                    "mode": {"type": "string", "enum": [m.value for m in FluxMode]},
                },
                "required": ["gamma", "v", "k", "r", "t"],
            },
        ),
        types.Tool(
            name="critical_radius",
            description="Vapor cluster radius (nm) at which polarization cancels binding",
            inputSchema={
                "type": "object",
                "properties": {
                    "charge_q": _NUMBER,
                    "epsilon": _NUMBER,
                    "r_ion": {"type": "number", "description": "ion radius (nm)"},
                    "binding_energy": {"type": "number", "description": "eV"},
                },
                "required": ["charge_q", "epsilon", "r_ion", "binding_energy"],
            },
        ),
        types.Tool(
            name="collimation_cone",
            description="De Broglie wavelength and opening angle behind an aperture",
            inputSchema={
                "type": "object",
                "properties": {
                    "mass_energy_mev": _NUMBER,
                    "kinetic_energy_mev": _NUMBER,
                    "aperture_m": _NUMBER,
                    "spacing_m": _NUMBER,
                },
                "required": ["mass_energy_mev", "kinetic_energy_mev", "aperture_m"],
            },
        ),
        types.Tool(
            name="chamber_model_cdf",
            description="Planar-radius CDF of track starts (probability units)",
            inputSchema={
                "type": "object",
                "properties": {
                    "radii_mm": {"type": "array", "items": _NUMBER},
                    "chamber": _CHAMBER,
                },
                "required": ["radii_mm"],
            },
        ),
        types.Tool(
            name="chamber_fit",
            description="Fit the track-start model to a frame,x,y CSV of track starts",
            inputSchema={
                "type": "object",
                "properties": {
                    "data_path": {"type": "string"},
                    "calibration_mm_per_px": _NUMBER,
                    "source_xy_px": {"type": "array", "items": _NUMBER},
                    "chamber": _CHAMBER,
                    "fit": {"type": "object", "description": "fit section of the run configuration"},
                },
                "required": ["data_path", "calibration_mm_per_px", "source_xy_px"],
            },
        ),
        types.Tool(
            name="geiger_curves",
            description="Normalised Geiger count-rate curves on a distance grid",
            inputSchema={
                "type": "object",
                "properties": {
                    "g_mm": {"type": "array", "items": _NUMBER},
                    "g_norm_mm": _NUMBER,
                    "geiger": _GEIGER,
                },
                "required": ["g_mm"],
            },
        ),
        types.Tool(
            name="geiger_fit_sz",
            description="Fit the window's air-equivalent slowing distance to a g_mm,count_rate CSV",
            inputSchema={
                "type": "object",
                "properties": {
                    "data_path": {"type": "string"},
                    "kind": {"type": "string", "enum": [k.value for k in ModelKind]},
                    "geiger": _GEIGER,
                },
                "required": ["data_path"],
            },
        ),
    ]


async def _read_lines(path: str) -> List[str]:
    try:
        async with aiofiles.open(path, mode="r", encoding="utf-8", newline="") as f:
            return (await f.read()).splitlines()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None


def _gamow(arguments: Dict[str, Any]) -> GamowParams:
    return GamowParams(
        gamma=float(arguments["gamma"]), v=float(arguments["v"]), k=float(arguments["k"])
    )


async def _run_tool(name: str, arguments: Dict[str, Any]) -> Any:
    if name == "gamow_square_norm":
        p = _gamow(arguments)
        r_max = arguments.get("r_max")
        return {
            "square_norm": total_square_norm(
                float(arguments["t"]), p, None if r_max is None else float(r_max)
            )
        }

    elif name == "gamow_flux":
        mode = FluxMode(arguments.get("mode", FluxMode.EXACT.value))
        value = flux_magnitude(float(arguments["r"]), float(arguments["t"]), _gamow(arguments), mode)
        return {"flux": value, "mode": mode.value}

    elif name == "critical_radius":
        cluster = ClusterModel(
            charge_q=float(arguments["charge_q"]),
            epsilon=float(arguments["epsilon"]),
            r_ion=float(arguments["r_ion"]),
            binding_energy=float(arguments["binding_energy"]),
        )
        return {"critical_radius_nm": critical_radius(cluster)}

    elif name == "collimation_cone":
        spacing = arguments.get("spacing_m")
        cone = collimation_cone(
            float(arguments["mass_energy_mev"]),
            float(arguments["kinetic_energy_mev"]),
            float(arguments["aperture_m"]),
            None if spacing is None else float(spacing),
        )
        return asdict(cone)

    elif name == "chamber_model_cdf":
        geometry = geometry_from_config(arguments.get("chamber", {}))
        radii = [float(r) for r in arguments["radii_mm"]]
        cdf = await asyncio.to_thread(model_cdf, geometry, radii)
        return {"radii_mm": radii, "cdf": np.asarray(cdf).tolist()}

    elif name == "chamber_fit":
        lines = await _read_lines(arguments["data_path"])
        records = ingest_tracks(
            lines,
            float(arguments["calibration_mm_per_px"]),
            tuple(float(v) for v in arguments["source_xy_px"]),
        )
        geometry = geometry_from_config(arguments.get("chamber", {}))
        settings = fit_from_config(arguments.get("fit", {}))
        result = await asyncio.to_thread(
            fit_parameters, settings.fit, geometry, empirical_cdf(records)
        )
        return result.to_dict()

    elif name == "geiger_curves":
        settings = geiger_from_config(arguments.get("geiger", {}))
        g = [float(x) for x in arguments["g_mm"]]
        curves = await asyncio.to_thread(
            normalized_curves,
            settings.kinds,
            g,
            float(arguments.get("g_norm_mm", settings.g_norm_mm)),
            settings.geometry,
            settings.n_nodes,
        )
        return {"g_mm": g, **{k.value: c.tolist() for k, c in curves.items()}}

    elif name == "geiger_fit_sz":
        data = read_count_data(await _read_lines(arguments["data_path"]))
        settings = geiger_from_config(arguments.get("geiger", {}))
        kind = ModelKind(arguments.get("kind", ModelKind.CASE_I.value))
        fit = await asyncio.to_thread(
            fit_stopping_equiv,
            data,
            kind,
            settings.geometry,
            settings.sz_bounds_mm,
            settings.n_nodes,
        )
        return {"kind": kind.value, **fit.to_dict()}

    else:
        raise ValueError(f"Unknown tool: {name}")


@server.call_tool()
async def handle_call_tool(name: str, arguments: dict) -> list[types.TextContent]:
    """Run a tool; model and data errors come back as text, not exceptions."""
    logger.info(f"Tool call: {name}")
    try:
        payload = await _run_tool(name, arguments or {})
    except MottlabError as e:
        logger.warning(f"{name} failed: {e}")
        return [types.TextContent(type="text", text=f"error: {e}")]
    except (KeyError, TypeError) as e:
        return [types.TextContent(type="text", text=f"error: bad arguments for {name}: {e}")]
    return [types.TextContent(type="text", text=json.dumps(payload, indent=2, sort_keys=True))]


async def main():
    """Run the server using stdin/stdout streams."""
    logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    logger.info("Starting mottlab MCP Server...")

    async with mcp.server.stdio.stdio_server() as (read_stream, write_stream):
        await server.run(
            read_stream,
            write_stream,
            InitializationOptions(
                server_name="mottlab",
                server_version=__version__,
                capabilities=server.get_capabilities(
                    notification_options=NotificationOptions(),
                    experimental_capabilities={},
                ),
            ),
        )


def run():
    asyncio.run(main())


if __name__ == "__main__":
    run()
