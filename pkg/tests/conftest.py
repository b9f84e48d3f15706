import sys
from pathlib import Path

# make sibling helper modules (gradcheck, reference_rows) importable
sys.path.insert(0, str(Path(__file__).parent))
