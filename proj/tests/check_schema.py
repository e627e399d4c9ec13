"""Validates `sketchmotion init` output against docs/schema/project.schema.json."""
import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema

cli, schema_path, fixtures = sys.argv[1], sys.argv[2], pathlib.Path(sys.argv[3])
schema = json.loads(pathlib.Path(schema_path).read_text())
jsonschema.Draft202012Validator.check_schema(schema)
validator = jsonschema.Draft202012Validator(schema)

with tempfile.TemporaryDirectory() as tmp:
    for name, k in [("one_stroke.svg", "24"), ("two_objects.svg", "8"), ("clipasso_32.svg", "64")]:
        out = pathlib.Path(tmp) / (name + ".json")
        subprocess.run([cli, "init", str(fixtures / name), "-o", str(out), "-K", k], check=True,
                       stdout=subprocess.DEVNULL)
        doc = json.loads(out.read_text())
        validator.validate(doc)
        print(f"ok {name}")

    bad = dict(doc, version="v2")
    assert not validator.is_valid(bad)
    bad = dict(doc, extra=1)
    assert not validator.is_valid(bad)
print("schema ok")
