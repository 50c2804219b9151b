"""Neural fuzzy extractor: expander training, secure sketches and salted-hash records."""

from .embeddings import EmbeddingSet, generate_synthetic, load_embedding_set, save_embedding_set, split
from .expander import (Expander, ExpanderParams, TrainConfig, Triplet, batch_gradient, forward,
                       forward_batch, init_params, load_params, mine_triplets, save_params, train,
                       triplet_loss)
from .geometry import (DecisionRegion, SupportSphere, fit_support_sphere, fit_user_region,
                       histogram_entropy, sphere_packing_count, sphere_packing_entropy)
from .lattice import (LatticeCodebook, LatticeSketch, decode_nearest, dequantize, make_sketch,
                      quantize, recover_center)
from .binary import (HAMMING_7_4, HAMMING_15_11, BinarySketch, CodeLayout, LinearCode, binarize,
                     make_binary_sketch, recover_binary_center, syndrome_decode)
from .records import (AuthRecord, EnrollConfig, RecordStore, canonical_serialize, enroll_user,
                      hash_digest, load_store, save_store, verify_user)
from .evaluation import EvalReport, far_frr_sweep, security_report

__version__ = "0.1.0"
