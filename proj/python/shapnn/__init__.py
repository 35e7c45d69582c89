"""Python bindings for the shapnn toolkit.

The heavy lifting lives in the compiled extension ``shapnn._core``; this
package re-exports its public names so ``import shapnn`` is enough.
"""

from shapnn._core import *  # noqa: F401,F403
from shapnn._core import __version__  # noqa: F401
