#!/usr/bin/env python3
"""Generate the bundled SMILES corpus and caption fixtures.

Molecules are random valence-correct trees of common organic atoms with
optional ring-group substituents. Every emitted SMILES must parse and have
computable properties under props_oracle before it reaches the fixture.
"""

import hashlib
import os
import random
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
import props_oracle as oracle

CAPACITY = {"C": 4, "N": 3, "O": 2, "S": 2}
HALOGENS = ["F", "Cl", "Br"]

RING_GROUPS = [
    "c%ccccc%",    # phenyl
    "c%ccncc%",    # pyridyl
    "C%CCCCC%",    # cyclohexyl
    "C%CCCC%",     # cyclopentyl
    "C%CCOC%",     # tetrahydrofuranyl
    "C%CCNCC%",    # piperidinyl
]


class Gen:
    def __init__(self, rng):
        self.rng = rng
        self.ring_digit = 0

    def next_digit(self):
        self.ring_digit += 1
        return str(self.ring_digit)

    def pick_atom(self):
        r = self.rng.random()
        if r < 0.70:
            return "C"
        if r < 0.82:
            return "N"
        if r < 0.94:
            return "O"
        return "S"

    def subtree(self, budget, parent_slots):
        """SMILES of a subtree consuming one of the parent's bonds."""
        if budget <= 0 or self.rng.random() < 0.25:
            r = self.rng.random()
            if r < 0.3:
                return self.rng.choice(HALOGENS), 0
            if r < 0.5:
                return "O", 0
            return "C", 0
        if self.rng.random() < 0.12:
            group = self.rng.choice(RING_GROUPS)
            d = self.next_digit()
            return group.replace("%", d), min(budget, 5)
        sym = self.pick_atom()
        used = 1  # bond to parent
        spent = 1
        out = sym
        # a carbonyl now and then
        if sym == "C" and parent_slots >= 1 and self.rng.random() < 0.2 and budget >= 2:
            out += "(=O)"
            used += 2
            spent += 1
        children = self.rng.randint(0, CAPACITY[sym] - used)
        parts = []
        for _ in range(children):
            if budget - spent <= 0:
                break
            sub, sub_spent = self.subtree(budget - spent - 1, CAPACITY[sym] - used)
            parts.append(sub)
            spent += 1 + sub_spent
        if parts:
            out += "".join("(" + p + ")" for p in parts[:-1]) + parts[-1]
        return out, spent

    def molecule(self):
        self.ring_digit = 0
        budget = self.rng.randint(3, 16)
        if self.rng.random() < 0.18:
            group = self.rng.choice(RING_GROUPS)
            core = group.replace("%", self.next_digit())
            sub, _ = self.subtree(budget, 1)
            return core + sub if self.rng.random() < 0.8 else core
        sym = "C"
        out = sym
        spent = 1
        parts = []
        for _ in range(self.rng.randint(1, 3)):
            if budget - spent <= 0:
                break
            sub, sub_spent = self.subtree(budget - spent - 1, 3)
            parts.append(sub)
            spent += 1 + sub_spent
        if parts:
            out += "".join("(" + p + ")" for p in parts[:-1]) + parts[-1]
        return out


def graph_key(mol):
    """Isomorphism-invariant key (Weisfeiler-Lehman refinement).

    Isomorphic molecules always map to the same key, so deduplicating on it
    removes every pair the downstream canonicalizer would merge. The rare
    WL collision between distinct molecules just drops one extra candidate.
    """
    labels = [
        "%s|%d|%d|%d" % (a.element, a.aromatic, a.charge, a.hcount)
        for a in mol.atoms
    ]
    adj = [[] for _ in mol.atoms]
    for a, b, order in mol.bonds:
        adj[a].append((b, order))
        adj[b].append((a, order))
    for _ in range(len(mol.atoms)):
        labels = [
            hashlib.md5(
                (labels[i] + "~" + ",".join(sorted("%d:%s" % (o, labels[j]) for j, o in adj[i]))).encode()
            ).hexdigest()
            for i in range(len(labels))
        ]
    return hashlib.md5("|".join(sorted(labels)).encode()).hexdigest()


def caption_for(smiles, mol, props):
    counts = {}
    for a in mol.atoms:
        counts[a.element.upper() if len(a.element) == 1 else a.element] = (
            counts.get(a.element.upper() if len(a.element) == 1 else a.element, 0) + 1
        )
    n_ring = len(mol.rings)
    aromatic = any(a.aromatic for a in mol.atoms)
    bits = [
        "The molecule is a small organic compound with %d heavy atoms" % len(mol.atoms)
    ]
    if n_ring == 0:
        bits.append("and an acyclic skeleton.")
    elif aromatic:
        bits.append("and %d ring(s), including an aromatic system." % n_ring)
    else:
        bits.append("and %d saturated ring(s)." % n_ring)
    bits.append(
        "It carries %d hydrogen bond donor(s) and %d acceptor(s)." % (props["hbd"], props["hba"])
    )
    if props["logp"] > 2.0:
        bits.append("Its calculated LogP of %.2f marks it as lipophilic." % props["logp"])
    elif props["logp"] < 0.0:
        bits.append("Its calculated LogP of %.2f marks it as hydrophilic." % props["logp"])
    else:
        bits.append("Its calculated LogP of %.2f is moderate." % props["logp"])
    if props["rb"] >= 5:
        bits.append("With %d rotatable bonds the scaffold is flexible." % props["rb"])
    else:
        bits.append("The scaffold is fairly rigid with %d rotatable bond(s)." % props["rb"])
    return " ".join(bits)


def main():
    out_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data", "fixtures")
    tables = oracle.load_tables(
        os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data", "params")
    )
    rng = random.Random(20260824)
    gen = Gen(rng)
    seen = set()
    molecules = []
    captions = []
    attempts = 0
    while len(molecules) < 5000 and attempts < 200000:
        attempts += 1
        smiles = gen.molecule()
        if smiles in seen:
            continue
        try:
            mol = oracle.parse_smiles(smiles)
            props = oracle.compute(mol, tables)
        except Exception:
            continue
        seen.add(smiles)
        key = graph_key(mol)
        if key in seen:
            continue
        seen.add(key)
        molecules.append(smiles)
        if len(captions) < 400:
            captions.append((smiles, caption_for(smiles, mol, props)))

    with open(os.path.join(out_dir, "corpus.smi"), "w") as f:
        for s in molecules:
            f.write(s + "\n")
    with open(os.path.join(out_dir, "captions.tsv"), "w") as f:
        for s, c in captions:
            f.write(s + "\t" + c + "\n")
    print("molecules:", len(molecules), "captions:", len(captions), "attempts:", attempts)


if __name__ == "__main__":
    main()
