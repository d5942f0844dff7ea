"""
Human-readable summaries of experiment runs for the terminal
"""
from typing import Any, Dict, List

from experiments import RunReport


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{k}: {_format_value(v)}" for k, v in value.items()) + "}"
    if isinstance(value, list) and len(value) > 6:
        return f"[{', '.join(_format_value(v) for v in value[:3])}, ... ({len(value)} values)]"
    if isinstance(value, list):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    return str(value)


class ReportBuilder:
    """Builds terminal responses from run reports"""

    @staticmethod
    def build_run_response(report: RunReport) -> str:
        """Summary of one experiment run"""
        if not report.success:
            return ReportBuilder.build_error_response(report.name, report.error or {})

        status = "passed" if report.passed else "finished with failed checks"
        lines = [f"{report.name} {status}; outputs in {report.directory}"]
        for key, value in report.summary.items():
            lines.append(f"  {key}: {_format_value(value)}")
        for key, ok in report.checks.items():
            lines.append(f"  [{'ok' if ok else 'FAIL'}] {key}")
        lines.append(f"  {len(report.files)} file(s) written")
        return "\n".join(lines)

    @staticmethod
    def build_verify_response(reports: List[RunReport]) -> str:
        """Summary of a verification sequence"""
        total = len(reports)
        passed = sum(1 for r in reports if r.passed)
        if passed == total:
            return f"Verification passed: all {total} identities hold."
        elif passed > 0:
            return f"Verification partially passed: {passed} out of {total} identities hold."
        else:
            return "Verification failed: no identity holds within tolerance."

    @staticmethod
    def build_error_response(name: str, error: Dict[str, Any]) -> str:
        kind = error.get("error", "Error")
        message = error.get("message", "unknown error")
        details = error.get("details") or {}
        text = f"{name} failed ({kind}): {message}"
        if details:
            text += "\n  " + "\n  ".join(f"{k}: {_format_value(v)}" for k, v in details.items())
        return text
