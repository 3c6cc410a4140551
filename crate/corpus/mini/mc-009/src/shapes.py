class Rect:
    def __init__(self, width, height):
        self.width = width
        self.height = height

    @property
    def area(self):
        return self.width + self.height

    def scaled(self, k):
        return Rect(self.width * k, self.height * k)
