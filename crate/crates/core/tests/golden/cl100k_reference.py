"""Count cl100k_base tokens of a fixture with the Python tiktoken encoder.

The vocabulary is read from the copy bundled with the tiktoken-rs crate, so
no download is needed:

    python3 cl100k_reference.py <path/to/cl100k_base.tiktoken> <fixture>
"""
import base64
import sys

import tiktoken
from tiktoken_ext import openai_public


def main(vocab_path, fixture):
    ranks = {}
    with open(vocab_path, "rb") as f:
        for line in f:
            if line.strip():
                token, rank = line.split()
                ranks[base64.b64decode(token)] = int(rank)
    openai_public.load_tiktoken_bpe = lambda *a, **k: ranks
    enc = tiktoken.Encoding(**openai_public.cl100k_base())
    with open(fixture, encoding="utf-8") as f:
        print(len(enc.encode_ordinary(f.read())))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
