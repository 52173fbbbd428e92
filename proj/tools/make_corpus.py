#!/usr/bin/env python3
# Copyright 2026 The bvv Authors.
#
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
"""Assembles the bundled toy corpus (English, Russian, Chinese) from text
that ships with a stock Debian/Ubuntu + CPython install.

Paragraphs from the three languages are interleaved in a fixed order so any
contiguous train/validation split sees all scripts.

usage: make_corpus.py out.txt [--target-bytes 1000000]
"""
import argparse
import importlib
import inspect
import os
import re
import warnings

LICENSES = "/usr/share/common-licenses"
GNUPG = "/usr/share/gnupg"
MIME = "/usr/share/mime/packages/freedesktop.org.xml"

STDLIB_MODULES = [
    "argparse", "asyncio", "collections", "concurrent.futures", "contextlib",
    "csv", "dataclasses", "datetime", "decimal", "difflib", "email",
    "enum", "fractions", "functools", "heapq", "http.client", "inspect",
    "itertools", "json", "logging", "multiprocessing", "os", "pathlib",
    "pickle", "queue", "random", "re", "shutil", "socket", "sqlite3",
    "statistics", "string", "subprocess", "tarfile", "textwrap", "threading",
    "typing", "unittest", "urllib.parse", "uuid", "zipfile",
]


def paragraphs(text):
    out = []
    for block in re.split(r"\n\s*\n", text):
        lines = [l.strip() for l in block.splitlines() if not l.startswith("#")]
        para = " ".join(l for l in lines if l)
        para = re.sub(r"\s+", " ", para).strip()
        if len(para) >= 40:
            out.append(para)
    return out


def read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def english():
    paras, seen = [], set()
    for name in sorted(os.listdir(LICENSES)):
        real = os.path.realpath(os.path.join(LICENSES, name))
        if real in seen:
            continue
        seen.add(real)
        paras += paragraphs(read(real))
    paras += paragraphs(read(os.path.join(GNUPG, "help.txt")))
    warnings.simplefilter("ignore")
    for modname in STDLIB_MODULES:
        mod = importlib.import_module(modname)
        docs = [inspect.getdoc(mod) or ""]
        for _, obj in sorted(vars(mod).items()):
            if inspect.isfunction(obj) or inspect.isclass(obj):
                if getattr(obj, "__module__", "") == mod.__name__:
                    docs.append(inspect.getdoc(obj) or "")
        for d in docs:
            paras += paragraphs(d)
    return paras


def mime_comments(lang):
    text = read(MIME)
    items = re.findall(r'<comment xml:lang="%s">(.*?)</comment>' % lang, text)
    return [" ".join(items[i:i + 12]) for i in range(0, len(items), 12)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--target-bytes", type=int, default=1_000_000)
    args = ap.parse_args()

    en = english()
    ru = paragraphs(read(os.path.join(GNUPG, "help.ru.txt"))) + mime_comments("ru")
    zh = paragraphs(read(os.path.join(GNUPG, "help.zh_CN.txt"))) + mime_comments("zh_CN")

    out, size = [], 0
    i = j = k = 0
    while i < len(en) and size < args.target_bytes:
        for _ in range(6):
            if i < len(en):
                out.append(en[i]); size += len(en[i].encode()) + 1; i += 1
        if j < len(ru):
            out.append(ru[j]); size += len(ru[j].encode()) + 1; j += 1
        if k < len(zh):
            out.append(zh[k]); size += len(zh[k].encode()) + 1; k += 1
    out += ru[j:] + zh[k:]
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


if __name__ == "__main__":
    main()
