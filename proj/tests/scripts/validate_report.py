# Copyright 2026 The hwq Authors
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Checks a pipeline report against the published JSON schema."""

import json
import sys

import jsonschema


def main(argv):
    if len(argv) != 3:
        print("usage: validate_report.py SCHEMA REPORT", file=sys.stderr)
        return 2
    with open(argv[1]) as f:
        schema = json.load(f)
    with open(argv[2]) as f:
        report = json.load(f)
    jsonschema.Draft202012Validator.check_schema(schema)
    jsonschema.Draft202012Validator(schema).validate(report)
    quantizable = report["model"]["quantizable_layers"]
    if len(report["layers"]) != quantizable:
        print(f"expected {quantizable} layer rows, got {len(report['layers'])}")
        return 1
    print(f"{argv[2]}: valid, {quantizable} layers")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
