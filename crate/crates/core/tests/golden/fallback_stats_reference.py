"""Recompute the fallback-tokenizer statistics of stats_corpus.jsonl.

Tokens are runs of word characters, plus every other non-space character
on its own.
"""
import json
import re
import sys

TOKEN = re.compile(r"\w+|[^\w\s]")


def count(text):
    return len(TOKEN.findall(text))


def description_text(doc):
    out = doc["tool_description"]
    for f in doc["functions"]:
        out += "\n" + f["name"]
        if f["description"]:
            out += ": " + f["description"]
        if f["required_parameters"] or f["optional_parameters"]:
            params = {
                "required_parameters": f["required_parameters"],
                "optional_parameters": f["optional_parameters"],
            }
            out += "\n" + json.dumps(params, separators=(",", ":"), ensure_ascii=False)
    return out


def main(path):
    docs = [json.loads(l) for l in open(path, encoding="utf-8") if l.strip()]
    desc = [count(description_text(d)) for d in docs]
    full = [count(json.dumps(d, indent=2, ensure_ascii=False)) for d in docs]
    print(json.dumps({
        "avg_description_tokens": sum(desc) / len(docs),
        "avg_document_tokens": sum(full) / len(docs),
        "has_usage_examples": False,
        "n_documents": len(docs),
        "total_document_tokens": sum(full),
    }))


if __name__ == "__main__":
    main(sys.argv[1])
