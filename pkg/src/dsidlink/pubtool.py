"""Publisher-side tool: find ``\\dataset{...}`` in LaTeX sources and verify them.

    pubtool verify --article 2006ApJ...600..100X --verifier http://ads.example/verify \\
        --feed-out feed.tsv paper.tex sections/*.tex

Exit status: 0 when every occurrence verified Valid, 2 when any occurrence is
definitely wrong (bad syntax, unknown facility, not found), 3 when the only
problems are centers that could not be reached (or the verifier itself).
"""

from __future__ import annotations

import argparse
import sys
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, TextIO

from .identifier import format_identifier, parse
from .verifier import RemoteVerifier, Status, VerificationResult, VerifierUnreachable

MACRO = "dataset"

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_UNAVAILABLE = 3

DEFINITE_FAILURES = {Status.INVALID_SYNTAX, Status.UNKNOWN_FACILITY, Status.NOT_FOUND}


class ScanError(ValueError):
    def __init__(self, kind: str, file: str, line: int, column: int):
        self.kind = kind
        self.file = file
        self.line = line
        self.column = column
        super().__init__(f"{file}:{line}:{column}: {kind}")


@dataclass(frozen=True)
class MacroOccurrence:
    identifier_text: str
    file: str
    line: int
    column: int


def scan(source: str, file: str = "<string>") -> list[MacroOccurrence]:
    """All ``\\dataset{...}`` occurrences outside comments, in document order.

    Whitespace inside the argument (line wrapping) is dropped; the argument is
    otherwise taken verbatim.
    """
    found: list[MacroOccurrence] = []
    n = len(source)
    i = 0
    line, col = 1, 1

    def advance(k: int) -> None:
        nonlocal i, line, col
        for _ in range(k):
            if source[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        c = source[i]
        if c == "%":
            end = source.find("\n", i)
            advance((n if end < 0 else end) - i)
            continue
        if c != "\\":
            advance(1)
            continue
        start_line, start_col = line, col
        j = i + 1
        if j < n and source[j].isalpha():
            while j < n and source[j].isalpha():
                j += 1
            word = source[i + 1 : j]
        else:
            # control symbol such as \% or \\ : consume both characters
            advance(min(2, n - i))
            continue
        advance(j - i)
        if word != MACRO:
            continue
        k = i
        while k < n and source[k] in " \t\r\n":
            k += 1
        if k >= n or source[k] != "{":
            continue
        advance(k - i + 1)
        close = i
        while close < n and source[close] not in "{}":
            close += 1
        if close >= n:
            raise ScanError("UnterminatedArgument", file, start_line, start_col)
        if source[close] == "{":
            raise ScanError("NestedBrace", file, start_line, start_col)
        text = "".join(source[i:close].split())
        found.append(MacroOccurrence(text, file, start_line, start_col))
        advance(close - i + 1)
    return found


class BatchVerifier(Protocol):
    def verify_batch(self, identifiers: list[str]) -> list[VerificationResult]: ...


@dataclass
class ManuscriptReport:
    occurrences: list[tuple[MacroOccurrence, VerificationResult]] = field(default_factory=list)
    file_errors: list[tuple[str, str]] = field(default_factory=list)
    feed_lines: list[str] = field(default_factory=list)
    verifier_error: str | None = None

    @property
    def summary(self) -> Counter:
        return Counter(result.status for _, result in self.occurrences)

    @property
    def exit_code(self) -> int:
        if self.verifier_error is not None:
            return EXIT_UNAVAILABLE
        statuses = self.summary
        if self.file_errors or any(statuses[s] for s in DEFINITE_FAILURES):
            return EXIT_INVALID
        if statuses[Status.CENTER_UNAVAILABLE]:
            return EXIT_UNAVAILABLE
        return EXIT_OK

    def feed(self) -> bytes:
        return "".join(self.feed_lines).encode("utf-8")


def verify_manuscript(files: Iterable[str | Path], verifier: BatchVerifier, article_id: str) -> ManuscriptReport:
    report = ManuscriptReport()
    occurrences: list[MacroOccurrence] = []
    for path in files:
        try:
            text = Path(path).read_text(encoding="utf-8")
            occurrences.extend(scan(text, str(path)))
        except (OSError, UnicodeDecodeError) as exc:
            report.file_errors.append((str(path), str(exc)))
        except ScanError as exc:
            report.file_errors.append((str(path), str(exc)))

    unique = list(dict.fromkeys(o.identifier_text for o in occurrences))
    if not unique:
        return report
    try:
        results = verifier.verify_batch(unique)
    except VerifierUnreachable as exc:
        report.verifier_error = str(exc)
        return report
    by_text = dict(zip(unique, results))
    report.occurrences = [(o, by_text[o.identifier_text]) for o in occurrences]

    seen = set()
    for text in unique:
        if by_text[text].status is Status.VALID:
            line = f"{article_id}\t{format_identifier(parse(text))}\n"
            if line not in seen:
                seen.add(line)
                report.feed_lines.append(line)
    return report


def write_text_report(report: ManuscriptReport, out: TextIO) -> None:
    rows = [
        (f"{o.file}:{o.line}:{o.column}", r.status.value, o.identifier_text, r.permanent_link or r.detail)
        for o, r in report.occurrences
    ]
    if rows:
        widths = [max(len(row[k]) for row in rows) for k in range(3)]
        for row in rows:
            out.write("  ".join(cell.ljust(w) for cell, w in zip(row[:3], widths)) + "  " + row[3] + "\n")
    for path, error in report.file_errors:
        out.write(f"{path}: error: {error}\n")
    if report.verifier_error:
        out.write(f"verifier unreachable: {report.verifier_error}\n")
    counts = ", ".join(f"{s.value}={n}" for s, n in sorted(report.summary.items(), key=lambda kv: kv[0].value))
    out.write(f"{len(report.occurrences)} occurrence(s)" + (f": {counts}" if counts else "") + "\n")


def write_tsv_report(report: ManuscriptReport, out: TextIO) -> None:
    for o, r in report.occurrences:
        out.write(f"{o.file}\t{o.line}\t{o.column}\t{o.identifier_text}\t{r.status.value}\n")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="pubtool", description="Check dataset identifiers in LaTeX manuscripts.")
    sub = parser.add_subparsers(dest="command", required=True)

    verify = sub.add_parser("verify", help="scan manuscripts and verify every \\dataset identifier")
    verify.add_argument("--article", required=True, help="article identifier used in the correlation feed")
    verify.add_argument("--verifier", required=True, help="master verifier URL")
    verify.add_argument("--feed-out", type=Path, help="write article/dataset feed lines here")
    verify.add_argument("--format", choices=("text", "tsv"), default="text")
    verify.add_argument("--timeout", type=float, default=60.0)
    verify.add_argument("files", nargs="*", type=Path)

    scan_cmd = sub.add_parser("scan", help="list \\dataset occurrences without verifying")
    scan_cmd.add_argument("files", nargs="+", type=Path)

    args = parser.parse_args(argv)

    if args.command == "scan":
        status = EXIT_OK
        for path in args.files:
            try:
                for o in scan(path.read_text(encoding="utf-8"), str(path)):
                    sys.stdout.write(f"{o.file}\t{o.line}\t{o.column}\t{o.identifier_text}\n")
            except (OSError, UnicodeDecodeError, ScanError) as exc:
                sys.stderr.write(f"{path}: {exc}\n")
                status = EXIT_INVALID
        return status

    if not args.article or any(c.isspace() for c in args.article):
        parser.error("--article must be a non-empty token without whitespace")
    report = verify_manuscript(args.files, RemoteVerifier(args.verifier, timeout=args.timeout), args.article)
    if args.format == "tsv":
        write_tsv_report(report, sys.stdout)
        for path, error in report.file_errors:
            sys.stderr.write(f"{path}: error: {error}\n")
        if report.verifier_error:
            sys.stderr.write(f"verifier unreachable: {report.verifier_error}\n")
    else:
        write_text_report(report, sys.stdout)
    if args.feed_out is not None and report.verifier_error is None:
        args.feed_out.write_bytes(report.feed())
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
