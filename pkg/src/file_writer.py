import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

from src.logger import logger


def atomic_write(path: str | Path, content: str | bytes) -> str:
    """Write content to path so that readers never see a partial file.

    The data goes to a temporary sibling first and is moved into place with
    Path.replace. The temporary file is removed on any failure, including
    KeyboardInterrupt.

    Args:
        path: Destination file; parent folders are created.
        content: Text (written as UTF-8) or bytes.

    Returns:
        str: The destination path.

    Raises:
        OSError: if the file cannot be written, with the destination in the message.
    """
    dst_path = Path(path)
    data = content.encode("utf-8") if isinstance(content, str) else content
    tmp_name = None
    try:
        dst_path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(
            prefix=f".{dst_path.name}.", suffix=".tmp", dir=dst_path.parent
        )
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        Path(tmp_name).replace(dst_path)
        tmp_name = None
    except OSError as e:
        logger.log(f"Failed to write '{dst_path}': {e}", level="error")
        raise OSError(f"cannot write {dst_path}: {e}") from e
    finally:
        if tmp_name is not None:
            Path(tmp_name).unlink(missing_ok=True)

    logger.log(f"Wrote {dst_path}", level="info")
    return str(dst_path)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    """Render rows as CSV text with '\\n' line endings."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def fmt_float(value: float) -> str:
    """Shortest text that round-trips a float."""
    return repr(float(value))
