from django.urls import path, include
from rest_framework.routers import DefaultRouter
from .views import ExperimentRunViewSet, CheckResultViewSet

app_name = 'experiments'

router = DefaultRouter()
router.register(r'runs', ExperimentRunViewSet)
router.register(r'checks', CheckResultViewSet)

urlpatterns = [
    path('', include(router.urls)),
]
