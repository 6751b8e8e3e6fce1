"""Primality testing and prime search used by both cryptosystems."""
try:
    import gmpy2

    def powmod(base, exp, mod):
        return int(gmpy2.powmod(base, exp, mod))

    def invert(a, mod):
        return int(gmpy2.invert(a, mod))

except ImportError:  # pragma: no cover - exercised only without gmpy2
    gmpy2 = None

    def powmod(base, exp, mod):
        return pow(base, exp, mod)

    def invert(a, mod):
        return pow(a, -1, mod)


MR_ROUNDS = 40

_SMALL_PRIMES = [p for p in range(3, 2000) if all(p % d for d in range(2, int(p**0.5) + 1))]


def is_probable_prime(n, rng, rounds=MR_ROUNDS):
    """Miller-Rabin with ``rounds`` random bases drawn from ``rng``."""
    if n < 2:
        return False
    if n in (2, 3):
        return True
    if n % 2 == 0:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = powmod(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def random_prime(bits, rng):
    """Uniform-ish prime with exactly ``bits`` bits (top two bits set)."""
    if bits < 3:
        raise ValueError("need at least 3 bits for a random odd prime")
    while True:
        cand = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if bits >= 4:
            cand |= 1 << (bits - 2)
        if is_probable_prime(cand, rng):
            return cand
