import os
import tempfile

# keep test logs out of the working tree; must run before src.logger is imported
os.environ.setdefault("RINFO_LOG_DIR", os.path.join(tempfile.gettempdir(), "rinfo-test-logs"))
