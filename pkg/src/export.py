"""
Export functionality for synthesis and verification results.

Writes the CSV tables and JSON summaries consumed by plotting tools.
"""

import csv
import json
import os
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np

from src.domain.models import FrfMatrix
from src.domain.specs import ModuleSpec, SpecVerdict, SynthesisTrace, SystemSpec
from src.model_io import save_spec
from src.services.spec_service import disc_radii
from src.logger import get_logger

logger = get_logger()


def _write_rows(output_path: str, fieldnames: Sequence[str], rows: Iterable[Dict[str, Any]]) -> int:
    directory = os.path.dirname(output_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    count = 0
    with open(output_path, 'w', newline='', encoding='utf-8') as csvfile:
        writer = csv.DictWriter(csvfile, fieldnames=list(fieldnames))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
            count += 1
    return count


def envelope_radii(spec: SystemSpec) -> np.ndarray:
    """
    Allowed deviation of |G_A| per frequency.

    The exact disc radius for SISO specs; for MIMO specs the largest
    unweighted norm ball inside the spec.
    """
    if spec.baseline.is_siso:
        return disc_radii(spec)
    return 1.0 / (spec.v_a.values.max(axis=1) * spec.w_a.values.max(axis=1))


class ResultExporter:
    """Handles exporting results to CSV and JSON."""

    @staticmethod
    def export_trace(trace: SynthesisTrace, output_path: str) -> bool:
        """
        Export the synthesis trace (one row per frequency and iteration).

        Args:
            trace: Synthesis trace
            output_path: Path to output CSV file

        Returns:
            True if export succeeded
        """
        try:
            count = _write_rows(output_path, ['omega_hz', 'iter', 'beta', 'delta'], trace.rows())
            logger.info(f"Exported {count} trace rows to CSV: {output_path}")
            return True
        except Exception as e:
            logger.error(f"Failed to export trace: {e}")
            return False

    @staticmethod
    def export_verdict(verdict: SpecVerdict, output_path: str) -> bool:
        """Export a per-frequency margin table (omega_hz, margin, pass)."""
        try:
            count = _write_rows(output_path, ['omega_hz', 'margin', 'pass'], verdict.rows())
            logger.info(f"Exported {count} verdict rows to CSV: {output_path}")
            return True
        except Exception as e:
            logger.error(f"Failed to export verdict: {e}")
            return False

    @staticmethod
    def export_spec_envelope(spec: SystemSpec, g_a_hat: FrfMatrix, output_path: str) -> bool:
        """
        Export the system spec envelope next to a redesigned system.

        Columns: omega_hz, |G_A|, disc_radius, |G_A_hat|, |E_A|.
        """
        try:
            g_a = spec.baseline
            g_a.require_compatible(g_a_hat)
            error = g_a.with_samples(g_a_hat.samples - g_a.samples)
            rows = (
                {'omega_hz': f, '|G_A|': a, 'disc_radius': r, '|G_A_hat|': h, '|E_A|': e}
                for f, a, r, h, e in zip(
                    spec.grid.hz, g_a.norms(), envelope_radii(spec), g_a_hat.norms(), error.norms()
                )
            )
            count = _write_rows(
                output_path, ['omega_hz', '|G_A|', 'disc_radius', '|G_A_hat|', '|E_A|'], rows
            )
            logger.info(f"Exported {count} envelope rows to CSV: {output_path}")
            return True
        except Exception as e:
            logger.error(f"Failed to export spec envelope: {e}")
            return False

    @staticmethod
    def export_system_frf(frf: FrfMatrix, output_path: str) -> bool:
        """
        Export an FRF as a table.

        SISO FRFs give (omega_hz, real, imag, magnitude); MIMO FRFs get
        one row per frequency and channel pair with output and input labels.
        """
        try:
            if frf.is_siso:
                fieldnames = ['omega_hz', 'real', 'imag', 'magnitude']
                rows = (
                    {'omega_hz': f, 'real': s.real, 'imag': s.imag, 'magnitude': abs(s)}
                    for f, s in zip(frf.grid.hz, frf.samples[:, 0, 0])
                )
            else:
                fieldnames = ['omega_hz', 'output', 'input', 'real', 'imag', 'magnitude']
                rows = (
                    {'omega_hz': f, 'output': out, 'input': inp,
                     'real': frf.samples[i, a, b].real, 'imag': frf.samples[i, a, b].imag,
                     'magnitude': abs(frf.samples[i, a, b])}
                    for i, f in enumerate(frf.grid.hz)
                    for a, out in enumerate(frf.output_labels)
                    for b, inp in enumerate(frf.input_labels)
                )
            count = _write_rows(output_path, fieldnames, rows)
            logger.info(f"Exported {count} FRF rows to CSV: {output_path}")
            return True
        except Exception as e:
            logger.error(f"Failed to export FRF: {e}")
            return False

    @staticmethod
    def export_rows(rows: Iterable[Dict[str, Any]], fieldnames: Sequence[str], output_path: str) -> bool:
        """Export generic result rows (region.csv, trajectory.csv)."""
        try:
            count = _write_rows(output_path, fieldnames, rows)
            logger.info(f"Exported {count} rows to CSV: {output_path}")
            return True
        except Exception as e:
            logger.error(f"Failed to export {output_path}: {e}")
            return False

    @staticmethod
    def export_summary(summary: Dict[str, Any], output_path: str) -> bool:
        """Export a JSON summary."""
        try:
            directory = os.path.dirname(output_path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(output_path, 'w', encoding='utf-8') as jsonfile:
                json.dump(summary, jsonfile, indent=2, ensure_ascii=False)
            logger.info(f"Exported summary to JSON: {output_path}")
            return True
        except Exception as e:
            logger.error(f"Failed to export summary: {e}")
            return False

    @staticmethod
    def export_module_specs(specs: Sequence[ModuleSpec], output_dir: str) -> List[str]:
        """
        Write one module spec file per module.

        Returns:
            Written paths; empty if writing failed
        """
        paths = []
        try:
            for spec in specs:
                path = os.path.join(output_dir, f"{spec.name}.spec.json")
                save_spec(spec, path)
                paths.append(path)
            logger.info(f"Exported {len(paths)} module specs to {output_dir}")
            return paths
        except Exception as e:
            logger.error(f"Failed to export module specs: {e}")
            return []
