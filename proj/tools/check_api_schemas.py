#!/usr/bin/env python3
"""Start `medbot serve`, exercise every /api endpoint and validate replies
against the JSON Schemas in data/schemas."""

import argparse
import json
import pathlib
import subprocess
import sys
import tempfile
import urllib.error
import urllib.request

import jsonschema


def call(base, method, path, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(base + path, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=10) as res:
            return res.status, json.loads(res.read())
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--medbot", required=True)
    ap.add_argument("--schemas", required=True, type=pathlib.Path)
    ap.add_argument("--resources", required=True)
    ap.add_argument("--corpus", required=True)
    args = ap.parse_args()

    schemas = {p.stem.replace(".schema", ""): json.loads(p.read_text())
               for p in args.schemas.glob("*.schema.json")}
    for s in schemas.values():
        jsonschema.Draft202012Validator.check_schema(s)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        graph = tmp / "graph.json"
        subprocess.run([args.medbot, "ingest", "--corpus", args.corpus, "--out", str(graph)],
                       check=True, stdout=subprocess.DEVNULL)
        config = tmp / "medbot.json"
        config.write_text(json.dumps({"port": 0, "data_dir": str(tmp / "store"),
                                      "graph_path": str(graph), "resource_dir": str(pathlib.Path(args.resources).resolve())}))
        server = subprocess.Popen([args.medbot, "serve", "--config", str(config)],
                                  stdout=subprocess.PIPE, text=True)
        try:
            line = server.stdout.readline()
            base = "http://127.0.0.1:" + line.rsplit(":", 1)[1].strip()
            checks = [
                ("chat_reply", 200, "POST", "/api/conversations/start", {"patient_id": "s1"}),
                ("chat_reply", 200, "POST", "/api/chat", {"patient_id": "s1", "message": "I have a fever and a cough"}),
                ("chat_reply", 200, "POST", "/api/chat", {"patient_id": "s1", "message": "I took paracetamol"}),
                ("chat_reply", 200, "POST", "/api/chat",
                 {"patient_id": "s1", "message": "What is the dosage per day for my magnesium hydroxide prescription?"}),
                ("chat_reply", 200, "POST", "/api/chat", {"patient_id": "s2", "message": "I have diarrhea"}),
                ("patient_profile", 200, "GET", "/api/patients/s1", None),
                ("predictions", 200, "GET", "/api/patients/s1/predictions?k=3", None),
                ("neighbors", 200, "GET", "/api/graph/neighbors?node=cough&k=3", None),
                ("attribute", 200, "GET", "/api/graph/attribute?drug=magnesium%20hydroxide&category=DURATION", None),
                ("error", 422, "POST", "/api/chat", {"patient_id": "s1", "message": ""}),
                ("error", 400, "POST", "/api/chat", {"patient_id": "s1"}),
                ("error", 404, "GET", "/api/patients/nobody", None),
                ("error", 400, "GET", "/api/patients/s1/predictions?k=0", None),
                ("error", 404, "GET", "/api/graph/neighbors?node=zzz", None),
                ("error", 400, "GET", "/api/graph/attribute?drug=x&category=NOPE", None),
            ]
            failures = 0
            for schema, want, method, path, body in checks:
                status, reply = call(base, method, path, body)
                problem = None
                if status != want:
                    problem = f"status {status}, expected {want}"
                else:
                    try:
                        jsonschema.validate(reply, schemas[schema])
                    except jsonschema.ValidationError as e:
                        problem = e.message
                print(("ok   " if problem is None else "FAIL ") + f"{method} {path} [{schema}]"
                      + ("" if problem is None else ": " + problem))
                failures += problem is not None
        finally:
            server.terminate()
            server.wait(timeout=10)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
