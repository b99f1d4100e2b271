#!/usr/bin/env python3
# Independent oracle for the pinned NLG metric semantics. Validated against
# the hand-derived anchor rows before emitting the frozen test table.
import math

def ngrams(toks, n):
    return [tuple(toks[i:i+n]) for i in range(len(toks)-n+1)]

def counts(xs):
    d = {}
    for x in xs: d[x] = d.get(x, 0) + 1
    return d

def bleu(cand, ref, order):
    if not cand: return 0.0
    prec = []
    for i in range(1, order+1):
        cg, rg = ngrams(cand, i), ngrams(ref, i)
        den = len(cg)
        rc = counts(rg)
        m = 0
        for g, c in counts(cg).items():
            m += min(c, rc.get(g, 0))
        if i == 1:
            if m == 0: return 0.0
            prec.append(m/den)
        else:
            if m == 0 or den == 0:
                prec.append((m+1)/(max(den,0)+1))
            else:
                prec.append(m/den)
    c, r = len(cand), len(ref)
    bp = math.exp(1 - r/c) if c < r else 1.0
    geo = math.exp(sum(math.log(p) for p in prec)/order)
    return 100.0 * bp * geo

def rouge_n(cand, ref, n):
    cg, rg = ngrams(cand, n), ngrams(ref, n)
    if not cg or not rg: return 0.0
    rc = counts(rg)
    m = 0
    for g, c in counts(cg).items():
        m += min(c, rc.get(g, 0))
    p, r = m/len(cg), m/len(rg)
    if p + r == 0: return 0.0
    return 100.0 * 2*p*r/(p+r)

def rouge_l(cand, ref):
    if not cand or not ref: return 0.0
    la, lb = len(cand), len(ref)
    prev = [0]*(lb+1)
    for i in range(1, la+1):
        cur = [0]*(lb+1)
        for j in range(1, lb+1):
            cur[j] = prev[j-1]+1 if cand[i-1]==ref[j-1] else max(prev[j], cur[j-1])
        prev = cur
    lcs = prev[lb]
    if lcs == 0: return 0.0
    p, r = lcs/la, lcs/lb
    return 100.0 * 2*p*r/(p+r)

SUFFIXES = ["ization","ations","ings","ment","ness","ing","ies","ed","es","s"]
def stem(w):
    for suf in SUFFIXES:
        if len(w) >= len(suf)+3 and w.endswith(suf):
            return w[:-len(suf)]
    return w

def meteor(cand, ref):
    if not cand or not ref: return 0.0
    align = [-1]*len(cand)
    used = [False]*len(ref)
    for i, w in enumerate(cand):          # stage 1: exact
        for j, v in enumerate(ref):
            if not used[j] and w == v:
                align[i] = j; used[j] = True; break
    for i, w in enumerate(cand):          # stage 2: stems
        if align[i] >= 0: continue
        sw = stem(w)
        for j, v in enumerate(ref):
            if not used[j] and sw == stem(v):
                align[i] = j; used[j] = True; break
    pairs = [(i, j) for i, j in enumerate(align) if j >= 0]
    m = len(pairs)
    if m == 0: return 0.0
    p, r = m/len(cand), m/len(ref)
    f = 10*p*r/(r+9*p)
    chunks = 0
    pc, pr = -10, -10
    for i, j in pairs:
        if not (i == pc+1 and j == pr+1):
            chunks += 1
        pc, pr = i, j
    pen = 0.5 * (chunks/m)**3
    return 100.0 * f * (1-pen)

ROWS = [
    ("the cat sat", "the cat sat down"),
    ("a b c", "a c"),
    ("c b a", "a b c"),
    ("a x b y", "a c b d"),
    ("walking", "walked"),
    ("the the the the", "the cat"),
    ("a b c d", "a b c d"),
    ("a b c d e f g h", "a b c d e f g h"),
    ("x y z", "p q r"),
    ("nodule present , small .", "nodule present , large ."),
    ("no nodule seen .", "nodule present , small ."),
    ("mass present , medium .", "mass present , medium ."),
    ("scans scanned", "scanning scan"),
    ("a b c d e", "a b c d e f g h i j"),
    ("a b c d e f g h i j", "a b c d e"),
    ("b a d c", "a b c d"),
    ("the cat the cat", "the cat"),
    ("findings : nodule , mass", "findings : none"),
    ("e d c b a", "a b c d e"),
    ("a a a b b c", "a b c"),
    ("one", "one"),
    ("one two", "two one"),
    ("lesion ed", "lesion es"),
    ("no mass seen . no nodule seen .", "no mass seen . nodule present , small ."),
    ("effusion present , large . no mass seen .", "no effusion seen . mass present , large ."),
]

# validate anchors first
anchors = [
    (0, "bleu1", 71.6531310574), (0, "bleu2", 71.6531310574), (0, "bleu4", 71.6531310574),
    (0, "rouge1", 85.7142857143), (0, "rouge2", 80.0), (0, "rougeL", 85.7142857143),
    (0, "meteor", 75.4985754986),
    (1, "bleu1", 66.6666666667), (1, "bleu2", 47.1404520791), (1, "bleu4", 57.7350269190),
    (1, "rouge1", 80.0), (1, "rouge2", 0.0), (1, "rougeL", 80.0), (1, "meteor", 47.6190476190),
    (2, "bleu1", 100.0), (2, "bleu2", 57.7350269190), (2, "bleu4", 63.8943104246),
    (2, "rouge1", 100.0), (2, "rouge2", 0.0), (2, "rougeL", 33.3333333333), (2, "meteor", 50.0),
    (3, "bleu1", 50.0), (3, "bleu2", 35.3553390593), (3, "bleu4", 37.9917842826),
    (3, "rouge1", 50.0), (3, "rouge2", 0.0), (3, "rougeL", 50.0), (3, "meteor", 25.0),
    (4, "bleu1", 0.0), (4, "bleu4", 0.0), (4, "rougeL", 0.0), (4, "meteor", 50.0),
    (5, "bleu1", 25.0),
    (6, "meteor", 99.21875),
    (7, "meteor", 99.9023437500),
]

def compute(cand_s, ref_s):
    c, r = cand_s.split(), ref_s.split()
    return {
        "bleu1": bleu(c, r, 1), "bleu2": bleu(c, r, 2), "bleu3": bleu(c, r, 3),
        "bleu4": bleu(c, r, 4), "rouge1": rouge_n(c, r, 1), "rouge2": rouge_n(c, r, 2),
        "rougeL": rouge_l(c, r), "meteor": meteor(c, r),
    }

bad = 0
for idx, key, want in anchors:
    got = compute(*ROWS[idx])[key]
    if abs(got - want) > 5e-9:
        print(f"ANCHOR MISMATCH row {idx} {key}: got {got!r} want {want!r}")
        bad += 1
if bad:
    raise SystemExit(f"{bad} anchor mismatches")
print(f"// all {len(anchors)} anchors matched; frozen table ({len(ROWS)} rows):")
for cand_s, ref_s in ROWS:
    m = compute(cand_s, ref_s)
    vals = ", ".join(f"{m[k]:.10f}" for k in
                     ["bleu1","bleu2","bleu3","bleu4","rouge1","rouge2","rougeL","meteor"])
    print(f'    {{"{cand_s}", "{ref_s}", {vals}}},')
