# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Manager for handling run metadata."""

import json


class RunMetadata:
    """A magic metadata store that keeps every value JSON encoded.

    Values are encoded on assignment so that only serializable data ends up
    in run reports, and so that two runs with identical inputs produce
    identical metadata.
    """

    def __init__(self, data=None):
        """Construct.

        Args:
            data: optional mapping of already encoded values to start from.
        """
        # Write through __dict__ to bypass __setattr__.
        self.__dict__["_data"] = dict(data or {})

    def __setattr__(self, name, value):
        """Set a value in the store with the given name.

        Args:
            name: name of value to set in store.
            value: value to set in store.
        """
        self._data[name] = json.dumps(value, sort_keys=True)

    def __getattr__(self, name):
        """Get from the store the value with the given name, or None.

        Args:
            name: name of value to get from store.

        Returns:
            value from store with given name.
        """
        return json.loads(self._data.get(name, "null"))

    def __delattr__(self, name):
        """Delete the value with the given name from the store, if it exists.

        Args:
            name: name of value to delete from store.

        Returns:
            deleted value from store.
        """
        return self._data.pop(name, None)

    def update(self, values):
        """Store every item of a mapping.

        Args:
            values: mapping of names to values.
        """
        for name, value in values.items():
            setattr(self, name, value)

    def as_dict(self):
        """Decode the whole store.

        Returns:
            A dict of decoded values sorted by name.
        """
        return {
            name: json.loads(self._data[name]) for name in sorted(self._data)
        }

    def __contains__(self, name):
        """Report whether a value is stored under the given name.

        Args:
            name: name to look up.

        Returns:
            True if the name is stored.
        """
        return name in self._data
