"""Minimal stdio language server for tests.

definition: the first `def <word>` or `class <word>` line among open
documents and .py files under the root.
references: every other whole-word occurrence of the word.
diagnostics: one error per line containing `ERROR`, published with the
document version. Every request is appended to requests.log in the root.
"""

import json
import os
import re
import sys

ROOT = os.getcwd()
docs = {}


def read_message():
    length = None
    while True:
        line = sys.stdin.buffer.readline()
        if not line:
            return None
        line = line.strip()
        if not line:
            break
        key, _, value = line.decode().partition(":")
        if key.lower() == "content-length":
            length = int(value)
    return json.loads(sys.stdin.buffer.read(length))


def send(message):
    body = json.dumps(message).encode()
    sys.stdout.buffer.write(b"Content-Length: %d\r\n\r\n" % len(body) + body)
    sys.stdout.buffer.flush()


def uri_of(path):
    return "file://" + path


def path_of(uri):
    return uri[len("file://"):]


def text_of(uri):
    if uri in docs:
        return docs[uri]
    with open(path_of(uri), encoding="utf-8") as f:
        return f.read()


def all_files():
    seen = dict(docs)
    for base, _, names in os.walk(ROOT):
        for n in sorted(names):
            if n.endswith(".py"):
                u = uri_of(os.path.join(base, n))
                if u not in seen:
                    with open(path_of(u), encoding="utf-8") as f:
                        seen[u] = f.read()
    return seen


def word_at(uri, line, character):
    text = text_of(uri).splitlines()[line]
    for m in re.finditer(r"\w+", text):
        if m.start() <= character <= m.end():
            return m.group(0)
    return None


def span(uri, line, start, end):
    return {"uri": uri, "range": {"start": {"line": line, "character": start},
                                  "end": {"line": line, "character": end}}}


def find(word, declarations):
    decl = re.compile(r"^\s*(?:def|class)\s+%s\b" % re.escape(word))
    out = []
    for uri, text in sorted(all_files().items()):
        for i, line in enumerate(text.splitlines()):
            is_decl = bool(decl.match(line))
            if is_decl != declarations:
                continue
            for m in re.finditer(r"\b%s\b" % re.escape(word), line):
                out.append(span(uri, i, m.start(), m.end()))
                if declarations:
                    break
    return out


def publish(uri, version):
    diags = []
    for i, line in enumerate(docs[uri].splitlines()):
        if "ERROR" in line:
            diags.append({"range": {"start": {"line": i, "character": 0},
                                    "end": {"line": i, "character": len(line)}},
                          "severity": 1, "code": "fake", "message": "ERROR marker"})
    send({"jsonrpc": "2.0", "method": "textDocument/publishDiagnostics",
          "params": {"uri": uri, "version": version, "diagnostics": diags}})


def log(method):
    with open(os.path.join(ROOT, "requests.log"), "a") as f:
        f.write(method + "\n")


def main():
    while True:
        msg = read_message()
        if msg is None:
            return
        method = msg.get("method")
        params = msg.get("params") or {}
        log(method)
        if method == "initialize":
            result = {"capabilities": {"definitionProvider": True, "referencesProvider": True,
                                       "textDocumentSync": 1}}
        elif method == "textDocument/didOpen":
            doc = params["textDocument"]
            docs[doc["uri"]] = doc["text"]
            publish(doc["uri"], doc["version"])
            continue
        elif method == "textDocument/didChange":
            doc = params["textDocument"]
            docs[doc["uri"]] = params["contentChanges"][-1]["text"]
            publish(doc["uri"], doc["version"])
            continue
        elif method == "textDocument/didClose":
            docs.pop(params["textDocument"]["uri"], None)
            continue
        elif method in ("textDocument/definition", "textDocument/references"):
            pos = params["position"]
            word = word_at(params["textDocument"]["uri"], pos["line"], pos["character"])
            result = find(word, method.endswith("definition")) if word else []
        elif method == "shutdown":
            result = None
        elif method == "exit":
            return
        else:
            if "id" not in msg:
                continue
            result = None
        send({"jsonrpc": "2.0", "id": msg["id"], "result": result})


if __name__ == "__main__":
    main()
