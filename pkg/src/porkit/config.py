"""Default parameters shared across the toolkit."""

# secp256k1 base-field prime, 2^256 - 2^32 - 977.
DEFAULT_PRIME = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F

SECURITY_BITS = 256
KEY_BYTES = SECURITY_BITS // 8

# Rate-1/2 striping.
DEFAULT_F = 64
DEFAULT_N = 128

# 1 - 0.9**44 > 0.99
DEFAULT_CHALLENGE_SIZE = 44

DEFAULT_SENTINELS = 1000
DEFAULT_SENTINELS_PER_AUDIT = 44

DEFAULT_DYN_AUDIT = 20

MAX_FRAME = 64 * 1024 * 1024

KEYS_ENV = "PORKIT_KEYS"
STORE_ENV = "PORKIT_STORE"
