"""stagelink: a deterministic engine for staging motion-captured avatars.

Skeleton streams come in over MSTREAM/1 datagrams or BVH playback, get
retargeted onto avatars and composed with independently steered reference
transforms under a per-channel ownership protocol, while cue sheets drive
staging changes and world poses fan out on the POSEBUS/1 broadcast.
"""

__version__ = "0.1.0"
