"""Validate docs/examples/*.json against the config schema with jsonschema."""
import json
import pathlib
import sys

try:
    import jsonschema
except ImportError:
    print("jsonschema not installed; skipping")
    sys.exit(0)

schema = json.loads(pathlib.Path(sys.argv[1]).read_text())
jsonschema.Draft202012Validator.check_schema(schema)
validator = jsonschema.Draft202012Validator(schema)
files = sorted(pathlib.Path(sys.argv[2]).glob("*.json"))
if not files:
    sys.exit("no example configurations found")
bad = 0
for f in files:
    errors = list(validator.iter_errors(json.loads(f.read_text())))
    for e in errors:
        print(f"{f.name}: {e.json_path}: {e.message}")
    bad += bool(errors)
    print(f"{'ok ' if not errors else 'BAD'} {f.name}")
sys.exit(1 if bad else 0)
