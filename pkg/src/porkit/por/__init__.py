from porkit.por.container import StoredFile, decode_tagged_file, encode_tagged_file
from porkit.por.extract import (ExtractionError, ExtractionPolicy, ExtractionReport, extract,
                                extract_sentinel)
from porkit.por.schemes import (SCHEME_NAMES, BlockListProof, Challenge, FileMeta, JkKeys,
                                JkPublicKey, MissingBlock, Scheme, SwPrivateKeys, SwPrivateProof,
                                SwPublicKey, SwPublicProof, SwPublicSecret, TaggedFile,
                                challenge_for, gen_challenge, keygen, por_prove, por_setup,
                                por_verify, prove_with, public_keys, scheme_name, tag_blocks,
                                verify_sw_private, verify_sw_public)
from porkit.por.sentinel import (BudgetExhausted, SentinelKeys, SentinelLedger, sentinel_audit,
                                 sentinel_challenge, sentinel_check, sentinel_meta, sentinel_setup)

__all__ = [
    "SCHEME_NAMES", "BlockListProof", "BudgetExhausted", "Challenge", "ExtractionError",
    "ExtractionPolicy", "ExtractionReport", "FileMeta", "JkKeys", "JkPublicKey", "MissingBlock",
    "Scheme", "SentinelKeys", "SentinelLedger", "StoredFile", "SwPrivateKeys", "SwPrivateProof",
    "SwPublicKey", "SwPublicProof", "SwPublicSecret", "TaggedFile", "challenge_for",
    "decode_tagged_file", "encode_tagged_file", "extract", "extract_sentinel", "gen_challenge",
    "keygen", "por_prove", "por_setup", "por_verify", "prove_with", "public_keys", "scheme_name",
    "sentinel_audit", "sentinel_challenge", "sentinel_check", "sentinel_meta", "sentinel_setup",
    "tag_blocks", "verify_sw_private", "verify_sw_public",
]
