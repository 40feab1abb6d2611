"""Which loops can run their iterations in any order?

The oracle runs each loop on small inputs, records what every iteration
reads and writes, and calls it Parallelizable only when no two iterations
touch the same location with at least one write. Here we label a few
hand-written kernels and then confirm the verdict by shuffling iterations.
"""
import numpy as np

from parloop.dependence import analyze, gcd_test
from parloop.loop_model import interpret, random_memory
from parloop.parse import parse_source

KERNELS = {
    "elementwise": "a[i] = b[i] + c[i];",
    "recurrence": "a[i] = a[i - 1] * 2;",
    "reduction": "s = s + b[i];",
    "even/odd": "a[2 * i] = b[i]; a[2 * i + 1] = c[i];",
    "guarded store": "if (b[i] > 100) { a[0] = c[i]; }",
}


def kernel(body):
    return parse_source(
        "void kernel(int n, int a[2 * n + 1], int b[n], int c[n]) {\n"
        "    int s = 0;\n"
        "    for (int i = 1; i < n; i++) {\n"
        f"        {body}\n"
        "    }\n"
        "}\n"
    )


for name, body in KERNELS.items():
    res = analyze(kernel(body))
    why = ""
    if res.conflicts:
        c = res.conflicts[0]
        where = c.location[0] + "".join(f"[{k}]" for k in c.location[1:])
        why = f"{c.kind} conflict on {where} between iterations {c.first} and {c.second}"
    elif res.written_scalars:
        why = f"writes outer scalar {res.written_scalars[0]}"
    elif res.static_conflicts:
        why = "a store that never ran here could still collide"
    print(f"{name:>14}: {res.label.title:<15} {why}")

# The verdict is checkable: a Parallelizable loop ends in the same memory
# state whatever order the iterations run in.
nest = kernel(KERNELS["even/odd"])
rng = np.random.default_rng(0)
init = random_memory(nest, 16, rng)
ref = interpret(nest, init)
m = len(nest.iterations(16))
same = sum(interpret(nest, init, rng.permutation(m)) == ref for _ in range(50))
print(f"\neven/odd kernel: {same}/50 shuffled runs match sequential execution")

# The classical static screen agrees: 2i and 2j+1 never meet.
print("gcd test on a[2i] vs a[2i+1]:", gcd_test((2, 0), (2, 1)).name)
