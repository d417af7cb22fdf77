"""Compiled inner loops for the codec.

Everything here works on flat ``uint8`` arrays with explicit start offsets so
callers can point the kernels at slices of larger buffers without copying.
All functions release the GIL; the codec runs them from a thread pool.
"""

import numpy as np
from numba import njit

MIN_MATCH = 3
MAX_DISTANCE = 8192
MAX_LITERAL_RUN = 32

# decoder status codes, translated to exceptions by the codec
OK = 0
ERR_TRUNCATED = -1
ERR_DISTANCE = -2
ERR_OVERRUN = -3
ERR_TRAILING = -4


TILE = 64

_M8 = np.uint64(0x00FF00FF00FF00FF)
_M16 = np.uint64(0x0000FFFF0000FFFF)
_M32 = np.uint64(0x00000000FFFFFFFF)
_S8 = np.uint64(8)
_S16 = np.uint64(16)
_S32 = np.uint64(32)

# Index arithmetic inside the loops below goes through local slice views and
# plain range() counters.  numba can then drop its negative-index checks and
# vectorize; with offsets folded into each index the loops run ~20x slower.


@njit(nogil=True, cache=True, inline="always")
def _transpose8x8(a0, a1, a2, a3, a4, a5, a6, a7):
    # 8x8 byte matrix, one little-endian word per row; swap 1-, 2-, then
    # 4-byte sub-blocks across word pairs
    t = ((a0 >> _S8) ^ a1) & _M8
    a1 ^= t
    a0 ^= t << _S8
    t = ((a2 >> _S8) ^ a3) & _M8
    a3 ^= t
    a2 ^= t << _S8
    t = ((a4 >> _S8) ^ a5) & _M8
    a5 ^= t
    a4 ^= t << _S8
    t = ((a6 >> _S8) ^ a7) & _M8
    a7 ^= t
    a6 ^= t << _S8
    t = ((a0 >> _S16) ^ a2) & _M16
    a2 ^= t
    a0 ^= t << _S16
    t = ((a1 >> _S16) ^ a3) & _M16
    a3 ^= t
    a1 ^= t << _S16
    t = ((a4 >> _S16) ^ a6) & _M16
    a6 ^= t
    a4 ^= t << _S16
    t = ((a5 >> _S16) ^ a7) & _M16
    a7 ^= t
    a5 ^= t << _S16
    t = ((a0 >> _S32) ^ a4) & _M32
    a4 ^= t
    a0 ^= t << _S32
    t = ((a1 >> _S32) ^ a5) & _M32
    a5 ^= t
    a1 ^= t << _S32
    t = ((a2 >> _S32) ^ a6) & _M32
    a6 ^= t
    a2 ^= t << _S32
    t = ((a3 >> _S32) ^ a7) & _M32
    a7 ^= t
    a3 ^= t << _S32
    return a0, a1, a2, a3, a4, a5, a6, a7


@njit(nogil=True, cache=True)
def _shuffle8(src, s0, m, dst, d0):
    # m % 8 == 0: eight elements per step become one word in each byte plane
    g8 = m // 8
    a = src[s0:s0 + 8 * m].view(np.uint64)
    b = dst[d0:d0 + 8 * m].view(np.uint64).reshape((8, g8))
    for g in range(g8):
        k = 8 * g
        x0, x1, x2, x3, x4, x5, x6, x7 = _transpose8x8(
            a[k], a[k + 1], a[k + 2], a[k + 3], a[k + 4], a[k + 5], a[k + 6], a[k + 7])
        b[0, g] = x0
        b[1, g] = x1
        b[2, g] = x2
        b[3, g] = x3
        b[4, g] = x4
        b[5, g] = x5
        b[6, g] = x6
        b[7, g] = x7


@njit(nogil=True, cache=True)
def _unshuffle8(src, s0, m, dst, d0):
    g8 = m // 8
    a = src[s0:s0 + 8 * m].view(np.uint64).reshape((8, g8))
    b = dst[d0:d0 + 8 * m].view(np.uint64)
    for g in range(g8):
        k = 8 * g
        x0, x1, x2, x3, x4, x5, x6, x7 = _transpose8x8(
            a[0, g], a[1, g], a[2, g], a[3, g], a[4, g], a[5, g], a[6, g], a[7, g])
        b[k] = x0
        b[k + 1] = x1
        b[k + 2] = x2
        b[k + 3] = x3
        b[k + 4] = x4
        b[k + 5] = x5
        b[k + 6] = x6
        b[k + 7] = x7


@njit(nogil=True, cache=True)
def _copy(src, s0, n, dst, d0):
    a = src[s0:s0 + n]
    b = dst[d0:d0 + n]
    for j in range(n):
        b[j] = a[j]


@njit(nogil=True, cache=True)
def shuffle_into(src, s0, n, typesize, dst, d0):
    """Byte-plane transpose of ``src[s0:s0+n]`` into ``dst[d0:d0+n]``.

    Output byte ``i*m + k`` is byte i of element k, m = n // typesize.  The
    ``n % typesize`` trailing bytes are copied through unchanged.
    """
    m = n // typesize
    body = m * typesize
    if typesize == 8 and m % 8 == 0:
        _shuffle8(src, s0, m, dst, d0)
    elif typesize > 1:
        a = src[s0:s0 + body].reshape((m, typesize))
        b = dst[d0:d0 + body].reshape((typesize, m))
        for k0 in range(0, m, TILE):
            k1 = min(m, k0 + TILE)
            for i in range(typesize):
                for k in range(k0, k1):
                    b[i, k] = a[k, i]
    else:
        _copy(src, s0, body, dst, d0)
    _copy(src, s0 + body, n - body, dst, d0 + body)


@njit(nogil=True, cache=True)
def unshuffle_into(src, s0, n, typesize, dst, d0):
    m = n // typesize
    body = m * typesize
    if typesize == 8 and m % 8 == 0:
        _unshuffle8(src, s0, m, dst, d0)
    elif typesize > 1:
        a = src[s0:s0 + body].reshape((typesize, m))
        b = dst[d0:d0 + body].reshape((m, typesize))
        for k0 in range(0, m, TILE):
            k1 = min(m, k0 + TILE)
            for i in range(typesize):
                for k in range(k0, k1):
                    b[k, i] = a[i, k]
    else:
        _copy(src, s0, body, dst, d0)
    _copy(src, s0 + body, n - body, dst, d0 + body)


@njit(nogil=True, cache=True)
def _match_length(src, q, p, limit):
    # common prefix of src[q:] and src[p:], at most limit bytes
    a = src[q:q + limit]
    b = src[p:p + limit]
    for j in range(limit):
        if a[j] != b[j]:
            return j
    return limit


@njit(nogil=True, cache=True)
def _emit_literals(src, start, stop, dst, op, limit):
    # returns the new output position, or -1 once the output would reach limit
    k = stop - start
    if k <= 0:
        return op
    need = k + (k + MAX_LITERAL_RUN - 1) // MAX_LITERAL_RUN
    if op + need >= limit:
        return -1
    while start < stop:
        run = min(stop - start, MAX_LITERAL_RUN)
        dst[op] = run - 1
        _copy(src, start, run, dst, op + 1)
        op += run + 1
        start += run
    return op


@njit(nogil=True, cache=True)
def lz_compress(src, s0, n, dst, d0, htab, base, hash_log, skip_trigger):
    """Greedy LZ77 over ``src[s0:s0+n]`` into ``dst[d0:]``.

    Returns the compressed length, or -1 when it would not be shorter than n.
    ``htab`` entries below ``base`` count as empty, which lets one table serve
    consecutive blocks without clearing it; the caller advances base by n.
    """
    limit = d0 + n
    op = d0
    if n < MIN_MATCH + 1:
        return -1
    shift = 32 - hash_log
    ip = 0
    anchor = 0
    misses = 0
    last = n - MIN_MATCH
    while ip <= last:
        p = s0 + ip
        seq = np.int64(src[p]) | (np.int64(src[p + 1]) << 8) | (np.int64(src[p + 2]) << 16)
        h = ((seq * 2654435761) & 0xFFFFFFFF) >> shift
        ref = htab[h]
        htab[h] = base + ip
        if base <= ref < base + ip:
            r = ref - base
            dist = ip - r
            q = s0 + r
            if dist <= MAX_DISTANCE and src[q] == src[p] and src[q + 1] == src[p + 1] and src[q + 2] == src[p + 2]:
                op = _emit_literals(src, s0 + anchor, p, dst, op, limit)
                if op < 0:
                    return -1
                length = MIN_MATCH + _match_length(src, q + MIN_MATCH, p + MIN_MATCH,
                                                   n - ip - MIN_MATCH)
                code = length - 2
                if code > 7:
                    code = 7
                extra = 0
                if code == 7:
                    extra = (length - 9) // 255 + 1
                if op + 2 + extra >= limit:
                    return -1
                d = dist - 1
                dst[op] = (code << 5) | (d >> 8)
                op += 1
                if code == 7:
                    rest = length - 9
                    while rest >= 255:
                        dst[op] = 255
                        op += 1
                        rest -= 255
                    dst[op] = rest
                    op += 1
                dst[op] = d & 255
                op += 1
                ip += length
                anchor = ip
                misses = 0
                continue
        misses += 1
        ip += 1 + (misses >> skip_trigger)
    op = _emit_literals(src, s0 + anchor, s0 + n, dst, op, limit)
    if op < 0:
        return -1
    return op - d0


@njit(nogil=True, cache=True)
def lz_decompress(src, s0, slen, dst, d0, dlen):
    """Decode one token stream; returns OK or a negative status code."""
    ip = s0
    iend = s0 + slen
    op = 0
    while op < dlen:
        if ip >= iend:
            return ERR_TRUNCATED
        t = np.int64(src[ip])
        ip += 1
        if t < 32:
            run = t + 1
            if ip + run > iend:
                return ERR_TRUNCATED
            if op + run > dlen:
                return ERR_OVERRUN
            _copy(src, ip, run, dst, d0 + op)
            ip += run
            op += run
        else:
            code = t >> 5
            length = code + 2
            if code == 7:
                while True:
                    if ip >= iend:
                        return ERR_TRUNCATED
                    b = np.int64(src[ip])
                    ip += 1
                    length += b
                    if b != 255:
                        break
            if ip >= iend:
                return ERR_TRUNCATED
            dist = (((t & 31) << 8) | np.int64(src[ip])) + 1
            ip += 1
            if dist > op:
                return ERR_DISTANCE
            if op + length > dlen:
                return ERR_OVERRUN
            q = d0 + op - dist
            w = d0 + op
            if dist >= length:
                _copy(dst, q, length, dst, w)
            else:
                # overlapping: the period-dist pattern doubles with every copy
                left = length
                while left > 0:
                    k = min(w - q, left)
                    _copy(dst, q, k, dst, w)
                    w += k
                    left -= k
            op += length
    if ip != iend:
        return ERR_TRAILING
    return OK


@njit(nogil=True, cache=True)
def compress_blocks(buf, nbytes, block_size, typesize, do_shuffle, first, stop,
                    scratch, out, sizes, htab, hash_log, skip_trigger, use_lz):
    """Compress blocks ``first..stop-1`` of ``buf``.

    Block i lands at ``out[i*block_size:]``: compressed when that is shorter,
    otherwise the (possibly shuffled) block verbatim.  ``sizes[i]`` receives
    the stored length, so a size equal to the block length marks a raw block.
    """
    base = np.int64(0)
    for b in range(first, stop):
        start = b * block_size
        n = min(block_size, nbytes - start)
        c = -1
        if do_shuffle:
            shuffle_into(buf, start, n, typesize, out, start)
            if use_lz:
                c = lz_compress(out, start, n, scratch, 0, htab, base, hash_log, skip_trigger)
        elif use_lz:
            c = lz_compress(buf, start, n, scratch, 0, htab, base, hash_log, skip_trigger)
        if c >= 0:
            _copy(scratch, 0, c, out, start)
        elif not do_shuffle:
            _copy(buf, start, n, out, start)
        base += n
        sizes[b] = n if c < 0 else c


@njit(nogil=True, cache=True)
def gather_blocks(out, sizes, block_size, dst, d0):
    op = d0
    for b in range(sizes.shape[0]):
        c = sizes[b]
        _copy(out, b * block_size, c, dst, op)
        op += c
    return op


@njit(nogil=True, cache=True)
def decompress_blocks(frame, src_offsets, sizes, nbytes, block_size, typesize,
                      shuffled, first, stop, scratch, out, o0, status):
    """Inverse of :func:`compress_blocks` for blocks ``first..stop-1``.

    ``status[i]`` receives the decoder status of block i; decoding stops at
    the first failure.
    """
    for b in range(first, stop):
        start = b * block_size
        n = min(block_size, nbytes - start)
        c = sizes[b]
        s0 = src_offsets[b]
        rc = OK
        if c == n:
            if shuffled:
                unshuffle_into(frame, s0, n, typesize, out, o0 + start)
            else:
                _copy(frame, s0, n, out, o0 + start)
        elif shuffled:
            rc = lz_decompress(frame, s0, c, scratch, 0, n)
            if rc == OK:
                unshuffle_into(scratch, 0, n, typesize, out, o0 + start)
        else:
            rc = lz_decompress(frame, s0, c, out, o0 + start, n)
        status[b] = rc
        if rc != OK:
            return
