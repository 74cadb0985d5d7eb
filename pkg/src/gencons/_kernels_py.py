"""Pure-Python bitmask kernels.

Servers are bits of an int mask (server ``s`` is ``1 << s``); value indices
are bits of a second mask.  Decision codes: 0 = Any, 1 = None,
``2 + 2*i`` = Maybe(value i), ``3 + 2*i`` = Decided(value i).
"""

BACKEND = "python"


def first_disjoint(masks):
    """Lexicographically smallest choice of one mask per set with empty AND.

    ``masks`` is a list of lists of quorum masks.  Returns a tuple of indices
    or ``None`` when every choice has a common member.
    """
    k = len(masks)
    if k == 0:
        return None
    choice = [0] * k

    def walk(depth, acc):
        for j, q in enumerate(masks[depth]):
            m = acc & q
            choice[depth] = j
            if m == 0:
                return tuple(choice[: depth + 1]) + (0,) * (k - depth - 1)
            if depth + 1 < k:
                hit = walk(depth + 1, m)
                if hit is not None:
                    return hit
        return None

    return walk(0, -1)


def decision_codes(nil, vals, quorums, fast):
    """Per-row, per-quorum decision codes for a (partial) state table.

    ``nil[r]`` is the mask of servers read as nil in row r, ``vals[r][i]`` the
    mask holding value i, ``quorums[r]`` the phase-2 quorum masks of row r and
    ``fast[r]`` whether row r is quorum-intersecting.
    """
    rows = len(quorums)
    out = [None] * rows
    above = 0
    for r in range(rows - 1, -1, -1):
        row_vals = vals[r]
        present = 0
        for i, m in enumerate(row_vals):
            if m:
                present |= 1 << i
        codes = []
        for q in quorums[r]:
            code = -1
            for i, m in enumerate(row_vals):
                if q & ~m == 0:
                    code = 3 + 2 * i
                    break
            if code < 0:
                if q & nil[r]:
                    code = 1
                else:
                    if fast[r]:
                        ev = above
                        for i, m in enumerate(row_vals):
                            if m & q:
                                ev |= 1 << i
                    else:
                        ev = above | present
                    if ev == 0:
                        code = 0
                    elif ev & (ev - 1):
                        code = 1
                    else:
                        code = 2 + 2 * (ev.bit_length() - 1)
            codes.append(code)
        out[r] = codes
        above |= present
    return out
