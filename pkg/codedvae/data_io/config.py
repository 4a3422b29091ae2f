IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
IDX_UBYTE = 0x08
# payloads larger than this are rejected as a corrupt header
IDX_MAX_BYTES = 2**31

CONTAINER_MAGIC = b"CDVS"
CONTAINER_VERSION = 1
